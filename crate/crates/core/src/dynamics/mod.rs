//! Residuals of the Pontryagin-Dirac, Lagrange-Dirac and Hamilton-Dirac
//! systems, the implicit stepper, multiplier recovery and invariant monitors.

mod integrator;
mod monitor;

pub(crate) use integrator::map_failure;
pub use integrator::{integrate, solve_step, DiracSystem, NodeVelocity, Stage, StepOptions, StepResult, Trajectory};
pub use monitor::{monitor_invariants, EntropyAccounting, InvariantReport};

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{check_len, DiracError, Result};
use crate::geometry::{ConstraintCoefficients, ConstraintSet, CotangentPoint, PontryaginState};
use crate::lagrangian::{lagrangian_energy, legendre_invert, ExternalForce, Hamiltonian, Lagrangian};
use crate::linalg::{inf_norm, least_squares};

/// Which of the three equivalent Dirac formulations drives a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    Pontryagin,
    LagrangeDirac,
    HamiltonDirac,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [Formulation::Pontryagin, Formulation::LagrangeDirac, Formulation::HamiltonDirac];

    pub fn name(self) -> &'static str {
        match self {
            Formulation::Pontryagin => "pontryagin",
            Formulation::LagrangeDirac => "lagrange-dirac",
            Formulation::HamiltonDirac => "hamilton-dirac",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = DiracError;
    fn from_str(s: &str) -> Result<Self> {
        Formulation::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| DiracError::InvalidParameter(format!("unknown formulation '{s}'")))
    }
}

/// Time derivative of a section `(t, x, p_t, p)`; `t_dot` must be 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionRate {
    pub t_dot: f64,
    pub x_dot: DVector<f64>,
    pub p_t_dot: f64,
    pub p_dot: DVector<f64>,
}

impl SectionRate {
    /// Difference quotients between two nodes a step `h` apart.
    pub fn between(a: &PontryaginState, b: &PontryaginState, h: f64) -> Self {
        Self { t_dot: 1.0, x_dot: (&b.x - &a.x) / h, p_t_dot: (b.p_t - a.p_t) / h, p_dot: (&b.p - &a.p) / h }
    }
}

/// The per-step unknowns `(x, v, p, p_t, lambda)`, `3n + 1 + m` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DaeUnknowns {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub p: DVector<f64>,
    pub p_t: f64,
    pub lambda: DVector<f64>,
}

impl DaeUnknowns {
    pub fn len(&self) -> usize {
        self.x.len() + self.v.len() + self.p.len() + 1 + self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.x.iter());
        out.extend(self.v.iter());
        out.extend(self.p.iter());
        out.push(self.p_t);
        out.extend(self.lambda.iter());
        DVector::from_vec(out)
    }

    pub fn from_vec(u: &DVector<f64>, n: usize, m: usize) -> Result<Self> {
        check_len("step unknowns", 3 * n + 1 + m, u.len())?;
        Ok(Self {
            x: u.rows(0, n).into_owned(),
            v: u.rows(n, n).into_owned(),
            p: u.rows(2 * n, n).into_owned(),
            p_t: u[3 * n],
            lambda: u.rows(3 * n + 1, m).into_owned(),
        })
    }
}

const SECTION_TOL: f64 = 1e-12;

fn check_section(rate: &SectionRate) -> Result<()> {
    if (rate.t_dot - 1.0).abs() > SECTION_TOL {
        return Err(DiracError::NonSection { t_dot: rate.t_dot });
    }
    Ok(())
}

fn force_at(f: Option<&dyn ExternalForce>, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    f.map_or_else(|| DVector::zeros(x.len()), |f| f.force(t, x, v))
}

fn check_dims(n: usize, state: &PontryaginState, rate: &SectionRate, m: usize, lambda: &DVector<f64>) -> Result<()> {
    check_len("configuration", n, state.x.len())?;
    state.check()?;
    check_len("rate x_dot", n, rate.x_dot.len())?;
    check_len("rate p_dot", n, rate.p_dot.len())?;
    check_len("multipliers", m, lambda.len())
}

/// Stacked residual of the Pontryagin-Dirac system at one point of a section:
/// `(xdot - v)`, `(p - dL/dv)`, `(pdot - dL/dx - A^T lambda - F)`, `(A v + B)`,
/// `(p_t_dot - dL/dt - lambda.B)`; length `3n + m + 1`.
pub fn pontryagin_dirac_residual(
    l: &dyn Lagrangian,
    c: &dyn ConstraintSet,
    force: Option<&dyn ExternalForce>,
    s: &PontryaginState,
    rate: &SectionRate,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = l.dim();
    let m = c.count();
    check_dims(n, s, rate, m, lambda)?;
    check_section(rate)?;
    let k = c.coefficients(s.t, &s.x, &s.v)?;
    let mut out = DVector::zeros(3 * n + m + 1);
    out.rows_mut(0, n).copy_from(&(&rate.x_dot - &s.v));
    out.rows_mut(n, n).copy_from(&(&s.p - l.d_v(s.t, &s.x, &s.v)));
    let mom = &rate.p_dot - l.d_x(s.t, &s.x, &s.v) - k.a.tr_mul(lambda) - force_at(force, s.t, &s.x, &s.v);
    out.rows_mut(2 * n, n).copy_from(&mom);
    out.rows_mut(3 * n, m).copy_from(&(&k.a * &s.v + &k.b));
    out[3 * n + m] = rate.p_t_dot - l.d_t(s.t, &s.x, &s.v) - k.b.dot(lambda);
    Ok(out)
}

/// Constraint coefficients on momentum variables: `A(t, x, v(p))` where `v(p)`
/// inverts the Legendre map on the regular block starting from `v_guess`.
pub fn momentum_coefficients(
    l: &dyn Lagrangian,
    c: &dyn ConstraintSet,
    t: f64,
    x: &DVector<f64>,
    p: &DVector<f64>,
    v_guess: &DVector<f64>,
) -> Result<ConstraintCoefficients> {
    let v = legendre_invert(l, t, x, p, v_guess)?;
    c.coefficients(t, x, &v)
}

/// A velocity constraint family transported to momentum variables through the
/// Legendre map. Components outside the regular block are taken as zero, so the
/// wrapped constraint must not depend on them.
pub struct MomentumConstraints<'a> {
    pub lagrangian: &'a dyn Lagrangian,
    pub constraints: &'a dyn ConstraintSet,
}

impl ConstraintSet for MomentumConstraints<'_> {
    fn dim(&self) -> usize {
        self.constraints.dim()
    }
    fn count(&self) -> usize {
        self.constraints.count()
    }
    fn coefficients(&self, t: f64, x: &DVector<f64>, p: &DVector<f64>) -> Result<ConstraintCoefficients> {
        momentum_coefficients(self.lagrangian, self.constraints, t, x, p, &DVector::zeros(x.len()))
    }
}

/// Row offsets of the Lagrange-Dirac residual stack.
pub mod lagrange_dirac_rows {
    pub fn kinematic(_n: usize) -> usize {
        0
    }
    pub fn energy(n: usize) -> usize {
        n
    }
    pub fn momentum(n: usize) -> usize {
        n + 1
    }
    pub fn constraint(n: usize) -> usize {
        2 * n + 1
    }
    pub fn legendre(n: usize, m: usize) -> usize {
        2 * n + 1 + m
    }
    pub fn energy_constraint(n: usize, m: usize) -> usize {
        3 * n + 1 + m
    }
}

/// Stacked residual of the Lagrange-Dirac system with coefficients evaluated on
/// `(t, x, p)`: `(xdot - v)`, `(p_t_dot - dL/dt - lambda.B)`,
/// `(pdot - dL/dx - A^T lambda - F)`, `(A xdot + B)`, `(p - dL/dv)`,
/// `(p_t + E_L)`; length `3n + m + 2`.
pub fn lagrange_dirac_residual(
    l: &dyn Lagrangian,
    c: &dyn ConstraintSet,
    force: Option<&dyn ExternalForce>,
    s: &PontryaginState,
    rate: &SectionRate,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = l.dim();
    let m = c.count();
    check_dims(n, s, rate, m, lambda)?;
    check_section(rate)?;
    let k = momentum_coefficients(l, c, s.t, &s.x, &s.p, &s.v)?;
    let mut out = DVector::zeros(3 * n + m + 2);
    out.rows_mut(0, n).copy_from(&(&rate.x_dot - &s.v));
    out[n] = rate.p_t_dot - l.d_t(s.t, &s.x, &s.v) - k.b.dot(lambda);
    let mom = &rate.p_dot - l.d_x(s.t, &s.x, &s.v) - k.a.tr_mul(lambda) - force_at(force, s.t, &s.x, &s.v);
    out.rows_mut(n + 1, n).copy_from(&mom);
    out.rows_mut(2 * n + 1, m).copy_from(&(&k.a * &rate.x_dot + &k.b * rate.t_dot));
    out.rows_mut(2 * n + 1 + m, n).copy_from(&(&s.p - l.d_v(s.t, &s.x, &s.v)));
    out[3 * n + 1 + m] = s.p_t + lagrangian_energy(l, s.t, &s.x, &s.v);
    Ok(out)
}

/// Stacked residual of the Hamilton-Dirac system on the cotangent bundle:
/// `(xdot - dH/dp)`, `(p_t_dot + dH/dt - lambda.B)`,
/// `(pdot + dH/dx - A^T lambda - F)`, `(A dH/dp + B)`; length `2n + m + 1`.
/// The external force, if any, is evaluated at velocity `dH/dp`.
pub fn hamilton_dirac_residual(
    h: &dyn Hamiltonian,
    c: &dyn ConstraintSet,
    force: Option<&dyn ExternalForce>,
    z: &CotangentPoint,
    rate: &SectionRate,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = h.dim();
    let m = c.count();
    check_len("configuration", n, z.x.len())?;
    check_len("momentum", n, z.p.len())?;
    check_len("rate x_dot", n, rate.x_dot.len())?;
    check_len("rate p_dot", n, rate.p_dot.len())?;
    check_len("multipliers", m, lambda.len())?;
    check_section(rate)?;
    let k = c.coefficients(z.t, &z.x, &z.p)?;
    let dhdp = h.d_p(z.t, &z.x, &z.p);
    let mut out = DVector::zeros(2 * n + m + 1);
    out.rows_mut(0, n).copy_from(&(&rate.x_dot - &dhdp));
    out[n] = rate.p_t_dot + h.d_t(z.t, &z.x, &z.p) - k.b.dot(lambda);
    let mom = &rate.p_dot + h.d_x(z.t, &z.x, &z.p) - k.a.tr_mul(lambda) - force_at(force, z.t, &z.x, &dhdp);
    out.rows_mut(n + 1, n).copy_from(&mom);
    out.rows_mut(2 * n + 1, m).copy_from(&(&k.a * &dhdp + &k.b));
    Ok(out)
}

/// Least-squares multipliers from the momentum equations together with the
/// part of `pdot - dL/dx - F` outside the range of `A^T` and the residual of
/// the `p_t` equation.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierFit {
    pub lambda: DVector<f64>,
    pub momentum_residual: f64,
    pub energy_residual: f64,
}

pub fn recover_multipliers(
    l: &dyn Lagrangian,
    c: &dyn ConstraintSet,
    force: Option<&dyn ExternalForce>,
    s: &PontryaginState,
    rate: &SectionRate,
) -> Result<MultiplierFit> {
    let n = l.dim();
    check_dims(n, s, rate, 0, &DVector::zeros(0))?;
    let k = c.coefficients(s.t, &s.x, &s.v)?;
    k.check_rank()?;
    let target = &rate.p_dot - l.d_x(s.t, &s.x, &s.v) - force_at(force, s.t, &s.x, &s.v);
    let at = k.a.transpose();
    let lambda = least_squares(&at, &target);
    let momentum_residual = if lambda.is_empty() { inf_norm(&target) } else { inf_norm(&(&at * &lambda - &target)) };
    let energy_residual = (rate.p_t_dot - l.d_t(s.t, &s.x, &s.v) - k.b.dot(&lambda)).abs();
    Ok(MultiplierFit { lambda, momentum_residual, energy_residual })
}

/// `p_t(0) = -E_L(t0, x0, v0)`, which makes the covariant energy vanish at the
/// initial point when `p0 = dL/dv`.
pub fn initialize_covariant_momentum(l: &dyn Lagrangian, t0: f64, x0: &DVector<f64>, v0: &DVector<f64>) -> f64 {
    -lagrangian_energy(l, t0, x0, v0)
}

/// Initial point `(t0, x0, v0, -E_L, dL/dv)` of the Pontryagin bundle.
pub fn initial_state(l: &dyn Lagrangian, t0: f64, x0: DVector<f64>, v0: DVector<f64>) -> Result<PontryaginState> {
    check_len("initial configuration", l.dim(), x0.len())?;
    check_len("initial velocity", l.dim(), v0.len())?;
    let p = l.d_v(t0, &x0, &v0);
    let p_t = initialize_covariant_momentum(l, t0, &x0, &v0);
    Ok(PontryaginState { t: t0, x: x0, v: v0, p_t, p })
}
