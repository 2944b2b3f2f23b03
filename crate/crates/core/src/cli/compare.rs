use std::thread;

use super::config::{Method, ScenarioConfig};
use super::simulate::{format_float, Scenario};
use super::CliError;
use crate::dynamics::Trajectory;
use crate::linalg::inf_norm;

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub method: Method,
    /// Largest node-wise difference from the reference in `x`, `v`, `p` or `p_t`.
    pub max_divergence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub reference: Method,
    pub entries: Vec<Divergence>,
    pub tol: f64,
}

impl CompareReport {
    pub fn max_divergence(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, d| a.max(d.max_divergence))
    }

    pub fn passed(&self) -> bool {
        self.max_divergence() <= self.tol
    }

    pub fn render(&self) -> String {
        let mut out = format!("reference: {}\n", self.reference);
        for d in &self.entries {
            out.push_str(&format!("{}: max divergence {}\n", d.method, format_float(d.max_divergence)));
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        out.push_str(&format!("{verdict} max divergence {} (tol {})\n", format_float(self.max_divergence()), format_float(self.tol)));
        out
    }
}

fn divergence(a: &Trajectory, b: &Trajectory) -> f64 {
    a.nodes.iter().zip(&b.nodes).fold(0.0_f64, |acc, (p, q)| {
        acc.max(inf_norm(&(&p.x - &q.x))).max(inf_norm(&(&p.v - &q.v))).max(inf_norm(&(&p.p - &q.p))).max((p.p_t - q.p_t).abs())
    })
}

/// Integrates the scenario with every method in `methods` concurrently and
/// measures each against the first.
pub fn compare_methods(cfg: &ScenarioConfig, methods: &[Method], tol: f64) -> Result<CompareReport, CliError> {
    let Some(&reference) = methods.first() else {
        return Err(CliError::Usage("no formulations given".into()));
    };
    let scn = Scenario::from_config(cfg)?;
    for &m in methods {
        scn.admits(m)?;
    }
    let ig = &cfg.integrator;
    let steps = cfg.steps();
    let runs: Vec<Result<Trajectory, CliError>> = thread::scope(|s| {
        let handles: Vec<_> = methods
            .iter()
            .map(|&m| {
                let scn = &scn;
                s.spawn(move || scn.simulate(m, ig.h, steps, ig.post_integrate_p_t))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let entries =
        methods.iter().zip(&runs).map(|(&method, traj)| Divergence { method, max_divergence: divergence(&runs[0], traj) }).collect();
    Ok(CompareReport { reference, entries, tol })
}
