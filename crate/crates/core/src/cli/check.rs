//! Pointwise verification of the Dirac structure along a computed trajectory.

use super::config::{ScenarioConfig, Tolerances};
use super::simulate::{format_float, Scenario};
use super::CliError;
use crate::dynamics::Trajectory;
use crate::geometry::{dirac_generators, dirac_membership_p, dirac_rank, isotropy_defect, ConstraintSet, MembershipReport, TangentP};
use crate::lagrangian::{check_derivatives, d_covariant_energy, ExternalForce, Lagrangian};

/// Largest acceptable `|<<e_i, e_j>>|` between Dirac-structure generators.
pub const ISOTROPY_TOL: f64 = 1e-12;

/// Membership of `(xdot lift, dE - F)` in the Dirac structure at stage `k`,
/// using difference quotients of the neighbouring nodes as the tangent.
pub fn stage_membership(
    l: &dyn Lagrangian,
    c: &dyn ConstraintSet,
    force: Option<&dyn ExternalForce>,
    traj: &Trajectory,
    k: usize,
    tol: f64,
) -> Result<MembershipReport, CliError> {
    let stage = &traj.stages[k];
    let st = &stage.state;
    let (prev, next) = (&traj.nodes[k], &traj.nodes[k + 1]);
    let u = TangentP {
        dt: stage.rate.t_dot,
        dx: stage.rate.x_dot.clone(),
        dv: (&next.v - &prev.v) / traj.h,
        dp_t: stage.rate.p_t_dot,
        dp: stage.rate.p_dot.clone(),
    };
    let mut a = d_covariant_energy(l, st);
    if let Some(f) = force {
        a.alpha -= f.force(st.t, &st.x, &st.v);
    }
    Ok(dirac_membership_p(st, c, &u, &a, tol)?)
}

/// `count` stage indices spread evenly over `0..len`.
pub fn sample_indices(len: usize, count: usize) -> Vec<usize> {
    if len == 0 || count == 0 {
        return Vec::new();
    }
    let count = count.min(len);
    let mut out: Vec<usize> = (0..count).map(|i| if count == 1 { 0 } else { i * (len - 1) / (count - 1) }).collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub seed: u64,
    pub results: Vec<PropertyResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!("seed: {}\n", self.seed);
        for r in &self.results {
            out.push_str(&format!("{} {}: {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail));
        }
        out
    }
}

/// Checks the trajectory and structure of `cfg`'s scenario at up to
/// `samples` stages.
pub fn check_scenario(cfg: &ScenarioConfig, tol: &Tolerances, samples: usize, seed: u64) -> Result<CheckReport, CliError> {
    let scn = Scenario::from_config(cfg)?;
    let ig = &cfg.integrator;
    let traj = scn.simulate(ig.formulation, ig.h, cfg.steps(), ig.post_integrate_p_t)?;
    let n = scn.dim();
    let idx = sample_indices(traj.stages.len(), samples);
    scn.with_parts(|l, c, force| -> Result<CheckReport, CliError> {
        let mut results = Vec::new();

        let mut worst = (0.0_f64, 0usize);
        let mut failures = Vec::new();
        for &k in &idx {
            let rep = stage_membership(l, c, force, &traj, k, tol.dirac_residual)?;
            let r = rep.max_residual();
            if r > worst.0 || !r.is_finite() {
                worst = (r, k);
            }
            if !rep.member && failures.len() < 3 {
                let names: Vec<String> = rep.violated().iter().map(|v| v.to_string()).collect();
                failures.push(format!("t = {} violates {}", format_float(traj.stages[k].state.t), names.join(", ")));
            }
        }
        let detail = format!("{} stages, worst residual {} (tol {})", idx.len(), format_float(worst.0), format_float(tol.dirac_residual));
        results.push(PropertyResult {
            name: "dirac-membership",
            passed: failures.is_empty(),
            detail: if failures.is_empty() { detail } else { format!("{detail}; {}", failures.join("; ")) },
        });

        let mut min_rank = usize::MAX;
        let mut defect = 0.0_f64;
        for &k in &idx {
            let st = &traj.stages[k].state;
            min_rank = min_rank.min(dirac_rank(st, c)?);
            defect = defect.max(isotropy_defect(&dirac_generators(st, c)?));
        }
        let full = 3 * n + 2;
        results.push(PropertyResult {
            name: "dirac-rank",
            passed: idx.is_empty() || min_rank == full,
            detail: format!("minimum rank {} of {full} over {} points", if idx.is_empty() { full } else { min_rank }, idx.len()),
        });
        results.push(PropertyResult {
            name: "dirac-isotropy",
            passed: defect <= ISOTROPY_TOL,
            detail: format!("largest pairing {} (tol {})", format_float(defect), format_float(ISOTROPY_TOL)),
        });

        let first = &traj.nodes[0];
        let t_range = (first.t, first.t + ig.horizon);
        let report = check_derivatives(l, &scn.derivative_box(t_range, &first.x, &first.v), 200, seed);
        results.push(PropertyResult { name: "derivatives", passed: report.passed, detail: report.to_string() });
        Ok(CheckReport { seed, results })
    })
}
