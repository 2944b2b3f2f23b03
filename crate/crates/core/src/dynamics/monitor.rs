use nalgebra::DVector;

use super::{pontryagin_dirac_residual, recover_multipliers, Stage, Trajectory};
use crate::error::Result;
use crate::geometry::{ConstraintSet, PontryaginState};
use crate::lagrangian::{covariant_energy, lagrangian_energy, ExternalForce, Lagrangian};
use crate::linalg::inf_norm;

/// Entropy bookkeeping supplied by thermodynamic systems.
pub trait EntropyAccounting {
    /// `(decomposition residual, entropy production)` over one step.
    fn entropy_terms(&self, prev: &PontryaginState, next: &PontryaginState, stage: &Stage, h: f64) -> Result<(f64, f64)>;
}

/// Per-step residuals of the balance laws, evaluated on the step ending at
/// time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    pub t: f64,
    /// Covariant energy at the end node.
    pub covariant_energy: f64,
    /// Covariant energy at the end node minus its initial value.
    pub covariant_energy_drift: f64,
    /// `p_t_dot - dL/dt - lambda.B` at the stage: the rate of the generalized
    /// energy equals minus the rate of `p_t`.
    pub energy_balance_residual: f64,
    /// `dE_L/dt - (<F, xdot> - lambda.B - dL/dt)` from node differences;
    /// second order in `h`.
    pub energy_rate_residual: f64,
    /// `A xdot + B` at the stage.
    pub kinematic_residual: DVector<f64>,
    /// Infinity norm of the Pontryagin-Dirac residual at the stage.
    pub dirac_residual: f64,
    /// Least-squares residual of the momentum equations for recovered multipliers.
    pub momentum_residual: f64,
    /// `p_t` equation residual for recovered multipliers.
    pub multiplier_energy_residual: f64,
    pub entropy_decomposition_residual: f64,
    pub entropy_production: f64,
}

pub fn monitor_invariants(
    l: &dyn Lagrangian,
    c: &dyn ConstraintSet,
    force: Option<&dyn ExternalForce>,
    entropy: Option<&dyn EntropyAccounting>,
    traj: &Trajectory,
) -> Result<Vec<InvariantReport>> {
    let h = traj.h;
    let Some(first) = traj.nodes.first() else {
        return Ok(Vec::new());
    };
    let e0 = covariant_energy(l, first);
    let mut out = Vec::with_capacity(traj.stages.len());
    for (k, stage) in traj.stages.iter().enumerate() {
        let (prev, next) = (&traj.nodes[k], &traj.nodes[k + 1]);
        let s = &stage.state;
        let rate = &stage.rate;
        let coeffs = c.coefficients(s.t, &s.x, &s.v)?;
        let e_next = covariant_energy(l, next);
        let energy_balance_residual = (rate.p_t_dot - l.d_t(s.t, &s.x, &s.v) - coeffs.b.dot(&stage.lambda)).abs();
        let power = force.map_or(0.0, |f| f.force(s.t, &s.x, &s.v).dot(&rate.x_dot)) - coeffs.b.dot(&stage.lambda) - l.d_t(s.t, &s.x, &s.v);
        let de = (lagrangian_energy(l, next.t, &next.x, &next.v) - lagrangian_energy(l, prev.t, &prev.x, &prev.v)) / h;
        let kinematic_residual = &coeffs.a * &rate.x_dot + &coeffs.b * rate.t_dot;
        let dirac_residual = inf_norm(&pontryagin_dirac_residual(l, c, force, s, rate, &stage.lambda)?);
        let fit = recover_multipliers(l, c, force, s, rate)?;
        let (entropy_decomposition_residual, entropy_production) = match entropy {
            Some(acc) => acc.entropy_terms(prev, next, stage, h)?,
            None => (0.0, 0.0),
        };
        out.push(InvariantReport {
            t: next.t,
            covariant_energy: e_next,
            covariant_energy_drift: e_next - e0,
            energy_balance_residual,
            energy_rate_residual: (de - power).abs(),
            kinematic_residual,
            dirac_residual,
            momentum_residual: fit.momentum_residual,
            multiplier_energy_residual: fit.energy_residual,
            entropy_decomposition_residual,
            entropy_production,
        });
    }
    Ok(out)
}
