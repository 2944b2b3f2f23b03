fn main() {
    std::process::exit(dirac_thermo::cli::main_with_args(std::env::args_os()));
}
