//! Running a scenario and turning the result into CSV tables and a summary.

use std::path::Path;

use nalgebra::DVector;

use super::config::{Method, ParticleSpec, ScenarioConfig, SystemConfig, Tolerances};
use super::CliError;
use crate::dynamics::{integrate, monitor_invariants, DiracSystem, Formulation, InvariantReport, StepOptions, Trajectory};
use crate::geometry::{ConstraintSet, PontryaginState};
use crate::lagrangian::fixtures::{ParticleHamiltonian, ParticleLagrangian, TimeAffineConstraint};
use crate::lagrangian::{covariant_energy, lagrangian_energy, ExternalForce, Lagrangian, SampleBox};
use crate::linalg::NewtonOptions;
use crate::thermo::{integrate_reduced, lift_reduced, SimpleOpenSystem, ThermoDirac, ThermoState};

const DEGENERATE_HAMILTONIAN: &str = "hamilton-dirac is unavailable for thermodynamic systems: the extended \
Lagrangian is at most linear in the entropy, mole and displacement velocities, so its fiber derivative cannot be \
inverted and no Hamiltonian exists; use pontryagin, lagrange-dirac or reduced";

/// A system ready to integrate.
pub enum Scenario {
    Piston { system: SimpleOpenSystem, init: ThermoState },
    Particle { lagrangian: ParticleLagrangian, hamiltonian: ParticleHamiltonian, constraint: TimeAffineConstraint, init: PontryaginState },
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self, CliError> {
        match &cfg.system {
            SystemConfig::IdealGasPiston(spec) => {
                let (system, init) = spec.build()?;
                Ok(Scenario::Piston { system, init })
            }
            SystemConfig::NonholonomicParticle(spec) => Ok(particle(spec)?),
        }
    }

    /// Whether `method` can integrate this scenario, with the reason if not.
    pub fn admits(&self, method: Method) -> Result<(), CliError> {
        match (self, method) {
            (Scenario::Piston { .. }, Method::Dirac(Formulation::HamiltonDirac)) => {
                Err(CliError::Inadmissible(DEGENERATE_HAMILTONIAN.into()))
            }
            (Scenario::Particle { .. }, Method::Reduced) => {
                Err(CliError::Inadmissible("the reduced method applies only to thermodynamic systems".into()))
            }
            _ => Ok(()),
        }
    }

    /// Runs `steps` steps of size `h` and lifts the result to the Pontryagin bundle.
    pub fn simulate(&self, method: Method, h: f64, steps: usize, post_integrate_p_t: bool) -> Result<Trajectory, CliError> {
        self.admits(method)?;
        let opts = StepOptions { post_integrate_p_t, ..StepOptions::default() };
        match self {
            Scenario::Piston { system, init } => match method {
                Method::Reduced => {
                    let reduced = integrate_reduced(system, init.clone(), h, steps, NewtonOptions::default())?;
                    Ok(lift_reduced(system, &reduced)?)
                }
                Method::Dirac(f) => {
                    let parts = ThermoDirac::new(system);
                    let start = crate::thermo::lift_node(system, init)?;
                    Ok(integrate(&parts.dirac_system(), f, start, h, steps, &opts)?)
                }
            },
            Scenario::Particle { lagrangian, hamiltonian, constraint, init } => {
                let Method::Dirac(f) = method else { unreachable!("checked by admits") };
                let sys = DiracSystem::new(lagrangian, constraint).with_hamiltonian(hamiltonian);
                Ok(integrate(&sys, f, init.clone(), h, steps, &opts)?)
            }
        }
    }

    pub fn monitor(&self, traj: &Trajectory) -> Result<Vec<InvariantReport>, CliError> {
        Ok(match self {
            Scenario::Piston { system, .. } => {
                let p = ThermoDirac::new(system);
                monitor_invariants(&p.lagrangian, &p.constraints, Some(&p.force), Some(&p.entropy), traj)?
            }
            Scenario::Particle { lagrangian, constraint, .. } => monitor_invariants(lagrangian, constraint, None, None, traj)?,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Scenario::Piston { system, .. } => system.layout().dim(),
            Scenario::Particle { lagrangian, .. } => lagrangian.dim(),
        }
    }

    /// Sampling box for derivative validation around `(x, v)` over the time
    /// window `t`. Entropy and moles stay within 10% so the gas remains
    /// admissible; other coordinates get `0.2 (1 + |c|)`.
    pub fn derivative_box(&self, t: (f64, f64), x: &DVector<f64>, v: &DVector<f64>) -> SampleBox {
        let mut b = SampleBox::around(t.0, x, v, 0.2);
        b.t = t;
        if let Scenario::Piston { system, .. } = self {
            let lay = system.layout();
            for i in [lay.entropy(), lay.moles()] {
                let r = 0.1 * x[i].abs();
                b.x[i] = (x[i] - r, x[i] + r);
            }
        }
        b
    }

    /// The Lagrangian, constraints and external force seen by the Dirac structure.
    pub fn with_parts<R>(&self, f: impl FnOnce(&dyn Lagrangian, &dyn ConstraintSet, Option<&dyn ExternalForce>) -> R) -> R {
        match self {
            Scenario::Piston { system, .. } => {
                let p = ThermoDirac::new(system);
                f(&p.lagrangian, &p.constraints, Some(&p.force))
            }
            Scenario::Particle { lagrangian, constraint, .. } => f(lagrangian, constraint, None),
        }
    }
}

fn particle(spec: &ParticleSpec) -> Result<Scenario, CliError> {
    Ok(Scenario::Particle {
        lagrangian: spec.lagrangian(),
        hamiltonian: spec.hamiltonian(),
        constraint: spec.constraint(),
        init: spec.initial_state()?,
    })
}

/// Row-major numeric table; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name || h.split('[').next() == Some(name))?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.map(format_float).unwrap_or_default())).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// Reads a table written by [`Table::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self, CliError> {
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(io)?;
        let header = r.headers().map_err(io)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            let row = rec
                .iter()
                .map(|c| if c.is_empty() { Ok(None) } else { c.parse().map(Some) })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        return "0".into();
    }
    if (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn per_step(reports: &[InvariantReport], k: usize, f: impl Fn(&InvariantReport) -> f64) -> Option<f64> {
    if k == 0 {
        None
    } else {
        reports.get(k - 1).map(f)
    }
}

fn residual_columns(header: &mut Vec<String>) {
    header.extend(
        [
            "dirac_residual",
            "kinematic_residual",
            "energy_balance_residual[W]",
            "multiplier_momentum_residual",
            "multiplier_energy_residual[W]",
        ]
        .map(String::from),
    );
}

fn push_residuals(row: &mut Vec<Option<f64>>, reports: &[InvariantReport], k: usize) {
    row.push(per_step(reports, k, |r| r.dirac_residual));
    row.push(per_step(reports, k, |r| r.kinematic_residual.amax()));
    row.push(per_step(reports, k, |r| r.energy_balance_residual));
    row.push(per_step(reports, k, |r| r.momentum_residual));
    row.push(per_step(reports, k, |r| r.multiplier_energy_residual));
}

/// Node-by-node trajectory table. Per-step quantities (multiplier and
/// residuals) belong to the step ending at the row's node and are empty on
/// the first row.
pub fn trajectory_table(scn: &Scenario, traj: &Trajectory, reports: &[InvariantReport]) -> Result<Table, CliError> {
    let mut header = vec!["t[s]".to_string()];
    let mut rows = Vec::with_capacity(traj.nodes.len());
    match scn {
        Scenario::Piston { system, .. } => {
            let lay = system.layout();
            let k = lay.n_q;
            let parts = ThermoDirac::new(system);
            header.extend((1..=k).map(|i| format!("q{i}[m]")));
            header.extend((1..=k).map(|i| format!("v_q{i}[m/s]")));
            header.extend(["S[J/K]", "N[mol]", "Gamma[K*s]", "W[J*s/mol]", "Sigma[J/K]"].map(String::from));
            header.extend((1..=k).map(|i| format!("p_q{i}[kg*m/s]")));
            header.extend(
                [
                    "p_Gamma[J/K]",
                    "p_W[mol]",
                    "p_t[J]",
                    "lambda[1]",
                    "E[J]",
                    "cov_energy[J]",
                    "I[W/K]",
                    "P_W[W]",
                    "P_H[W]",
                    "P_M[W]",
                    "N_dot[mol/s]",
                ]
                .map(String::from),
            );
            header.extend((1..=system.ports.len()).map(|a| format!("J{a}[mol/s]")));
            header.push("entropy_decomposition_residual[W/K]".into());
            residual_columns(&mut header);
            for (idx, node) in traj.nodes.iter().enumerate() {
                let point = lay.point(&node.x, &node.v);
                let ex = system.exchange(node.t, &point)?;
                let power = ex.power_flows(&point.v_q);
                let mut row: Vec<Option<f64>> = vec![Some(node.t)];
                row.extend(node.x.rows(0, k).iter().map(|z| Some(*z)));
                row.extend(node.v.rows(0, k).iter().map(|z| Some(*z)));
                row.extend(node.x.rows(k, 5).iter().map(|z| Some(*z)));
                row.extend(node.p.rows(0, k).iter().map(|z| Some(*z)));
                row.push(Some(node.p[lay.thermal()]));
                row.push(Some(node.p[lay.matter()]));
                row.push(Some(node.p_t));
                row.push(if idx == 0 { None } else { traj.stages.get(idx - 1).map(|s| s.lambda[0]) });
                row.push(Some(system.energy(&point)));
                row.push(Some(covariant_energy(&parts.lagrangian, node)));
                row.push(Some(ex.entropy_production(&point.v_q).total));
                row.extend([power.work, power.heat, power.matter, node.v[lay.moles()]].map(Some));
                row.extend(ex.ports.iter().map(|p| Some(p.molar_flow)));
                row.push(per_step(reports, idx, |r| r.entropy_decomposition_residual));
                push_residuals(&mut row, reports, idx);
                rows.push(row);
            }
        }
        Scenario::Particle { lagrangian, constraint, .. } => {
            let n = lagrangian.dim();
            header.extend((1..=n).map(|i| format!("x{i}[m]")));
            header.extend((1..=n).map(|i| format!("v{i}[m/s]")));
            header.extend((1..=n).map(|i| format!("p{i}[kg*m/s]")));
            header.extend(["p_t[J]", "lambda", "E[J]", "cov_energy[J]", "P_constraint[W]"].map(String::from));
            residual_columns(&mut header);
            for (idx, node) in traj.nodes.iter().enumerate() {
                let mut row: Vec<Option<f64>> = vec![Some(node.t)];
                row.extend(node.x.iter().chain(node.v.iter()).chain(node.p.iter()).map(|z| Some(*z)));
                row.push(Some(node.p_t));
                let stage = if idx == 0 { None } else { traj.stages.get(idx - 1) };
                row.push(stage.map(|s| s.lambda[0]));
                row.push(Some(lagrangian_energy(lagrangian, node.t, &node.x, &node.v)));
                row.push(Some(covariant_energy(lagrangian, node)));
                // Power of the constraint and explicit time dependence at the stage.
                let power = match stage {
                    Some(s) => {
                        let st = &s.state;
                        let b = constraint.coefficients(st.t, &st.x, &st.v)?.b;
                        Some(-b.dot(&s.lambda) - lagrangian.d_t(st.t, &st.x, &st.v))
                    }
                    None => None,
                };
                row.push(power);
                push_residuals(&mut row, reports, idx);
                rows.push(row);
            }
        }
    }
    Ok(Table { header, rows })
}

pub fn invariant_table(reports: &[InvariantReport]) -> Table {
    let header = [
        "t[s]",
        "covariant_energy[J]",
        "covariant_energy_drift[J]",
        "energy_balance_residual[W]",
        "energy_rate_residual[W]",
        "kinematic_residual",
        "dirac_residual",
        "multiplier_momentum_residual",
        "multiplier_energy_residual[W]",
        "entropy_decomposition_residual[W/K]",
        "entropy_production[W/K]",
    ]
    .map(String::from)
    .to_vec();
    let rows = reports
        .iter()
        .map(|r| {
            [
                r.t,
                r.covariant_energy,
                r.covariant_energy_drift,
                r.energy_balance_residual,
                r.energy_rate_residual,
                r.kinematic_residual.amax(),
                r.dirac_residual,
                r.momentum_residual,
                r.multiplier_energy_residual,
                r.entropy_decomposition_residual,
                r.entropy_production,
            ]
            .map(Some)
            .to_vec()
        })
        .collect();
    Table { header, rows }
}

/// One monitored quantity and its pass threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    /// `true` when `value` must not fall below `bound`.
    pub lower: bool,
}

impl Check {
    pub fn passed(&self) -> bool {
        if self.lower {
            self.value >= self.bound
        } else {
            self.value <= self.bound
        }
    }
}

/// Summary numbers, each computed from trajectory table columns only.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub steps: usize,
    pub h: f64,
    pub checks: Vec<Check>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.value)
    }

    pub fn render(&self) -> String {
        let mut out = format!("method: {}\nsteps: {}\nh: {}\n", self.method, self.steps, format_float(self.h));
        for c in &self.checks {
            let op = if c.lower { ">=" } else { "<=" };
            let verdict = if c.passed() { "PASS" } else { "FAIL" };
            out.push_str(&format!("{verdict} {}: {} ({op} {})\n", c.name, format_float(c.value), format_float(c.bound)));
        }
        out.push_str(if self.passed() { "status: all tolerances met\n" } else { "status: tolerance exceeded\n" });
        out
    }
}

fn values(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).unwrap_or_default().into_iter().flatten().collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

pub fn summarize(table: &Table, method: Method, h: f64, tol: &Tolerances) -> Summary {
    let e = values(table, "E");
    let cov = values(table, "cov_energy");
    let drift = cov.first().map_or(0.0, |c0| cov.iter().fold(0.0_f64, |a, c| a.max((c - c0).abs())));
    let mut checks = vec![Check { name: "max_covariant_energy_drift", value: drift, bound: tol.covariant_energy, lower: false }];

    let mut first_law = 0.0_f64;
    if table.column("P_M").is_some() {
        // Trapezoid rule on the node powers.
        let (pw, ph, pm) = (values(table, "P_W"), values(table, "P_H"), values(table, "P_M"));
        let total: Vec<f64> = (0..pw.len()).map(|i| pw[i] + ph[i] + pm[i]).collect();
        let mut integral = 0.0;
        for k in 1..e.len() {
            integral += 0.5 * h * (total[k - 1] + total[k]);
            first_law = first_law.max((e[k] - e[0] - integral).abs());
        }
    } else if let Some(col) = table.column("P_constraint") {
        // Midpoint rule with the stage powers.
        let mut integral = 0.0;
        for k in 1..e.len() {
            integral += h * col[k].unwrap_or(0.0);
            first_law = first_law.max((e[k] - e[0] - integral).abs());
        }
    }
    checks.push(Check { name: "max_first_law_residual", value: first_law, bound: tol.first_law, lower: false });
    if table.column("I").is_some() {
        let min_i = values(table, "I").into_iter().fold(f64::INFINITY, f64::min);
        checks.push(Check { name: "min_entropy_production", value: min_i, bound: tol.entropy_production_floor, lower: true });
        let dec = max_abs(&values(table, "entropy_decomposition_residual"));
        checks.push(Check { name: "max_entropy_decomposition_residual", value: dec, bound: tol.entropy_decomposition, lower: false });
    }
    for (name, col, bound) in [
        ("max_dirac_residual", "dirac_residual", tol.dirac_residual),
        ("max_kinematic_residual", "kinematic_residual", tol.kinematic),
        ("max_multiplier_momentum_residual", "multiplier_momentum_residual", tol.multiplier),
        ("max_multiplier_energy_residual", "multiplier_energy_residual", tol.multiplier),
    ] {
        checks.push(Check { name, value: max_abs(&values(table, col)), bound, lower: false });
    }
    Summary { method, steps: table.rows.len().saturating_sub(1), h, checks }
}

/// Everything `run` produces.
#[derive(Debug)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub reports: Vec<InvariantReport>,
    pub table: Table,
    pub summary: Summary,
}

pub fn run_scenario(cfg: &ScenarioConfig, tol: &Tolerances) -> Result<RunOutput, CliError> {
    let scn = Scenario::from_config(cfg)?;
    let ig = &cfg.integrator;
    let trajectory = scn.simulate(ig.formulation, ig.h, cfg.steps(), ig.post_integrate_p_t)?;
    let reports = scn.monitor(&trajectory)?;
    let table = trajectory_table(&scn, &trajectory, &reports)?;
    let summary = summarize(&table, ig.formulation, ig.h, tol);
    Ok(RunOutput { trajectory, reports, table, summary })
}
