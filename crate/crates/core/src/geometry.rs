//! Points, (co)tangent elements and Dirac structures on the extended bundles.
//!
//! Everything is expressed in a single coordinate chart. For a configuration
//! dimension `n` the extended configuration space is `Y = R x Q` with
//! coordinates `(t, x)`, its cotangent bundle carries `(t, x, p_t, p)` and the
//! covariant Pontryagin bundle carries `(t, x, v, p_t, p)`, so
//! `dim P = 3n + 2`.
//!
//! Flat vector layouts (used for rank computations) are
//! `[dt, dx.., dv.., dp_t, dp..]` for tangent vectors of `P` and
//! `[pi, alpha.., beta.., gamma, w..]` for covectors, so the duality pairing is
//! the Euclidean dot product of the two layouts.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, DiracError, Result};
use crate::linalg::{least_squares, null_space, numerical_rank, RANK_RTOL};

/// A point `(t, x)` of the extended configuration space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPoint {
    pub t: f64,
    pub x: DVector<f64>,
}

/// A tangent vector `(dt, dx)` to the extended configuration space.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentY {
    pub dt: f64,
    pub dx: DVector<f64>,
}

/// A covector `(p_t, p)` on the extended configuration space. `p_t` is the
/// momentum conjugate to time.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentY {
    pub p_t: f64,
    pub p: DVector<f64>,
}

impl CotangentY {
    pub fn pair(&self, u: &TangentY) -> f64 {
        self.p_t * u.dt + self.p.dot(&u.dx)
    }
}

/// A point `(t, x, p_t, p)` of the cotangent bundle of `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentPoint {
    pub t: f64,
    pub x: DVector<f64>,
    pub p_t: f64,
    pub p: DVector<f64>,
}

/// A point `(t, x, v, p_t, p)` of the covariant Pontryagin bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct PontryaginState {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub p_t: f64,
    pub p: DVector<f64>,
}

impl PontryaginState {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn base(&self) -> ExtendedPoint {
        ExtendedPoint { t: self.t, x: self.x.clone() }
    }

    pub fn cotangent_point(&self) -> CotangentPoint {
        CotangentPoint { t: self.t, x: self.x.clone(), p_t: self.p_t, p: self.p.clone() }
    }

    pub(crate) fn check(&self) -> Result<()> {
        let n = self.x.len();
        check_len("Pontryagin velocity", n, self.v.len())?;
        check_len("Pontryagin momentum", n, self.p.len())
    }
}

/// Tangent vector to the Pontryagin bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentP {
    pub dt: f64,
    pub dx: DVector<f64>,
    pub dv: DVector<f64>,
    pub dp_t: f64,
    pub dp: DVector<f64>,
}

/// Covector on the Pontryagin bundle, dual to [`TangentP`].
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentP {
    pub pi: f64,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub gamma: f64,
    pub w: DVector<f64>,
}

impl TangentP {
    pub fn zeros(n: usize) -> Self {
        Self { dt: 0.0, dx: DVector::zeros(n), dv: DVector::zeros(n), dp_t: 0.0, dp: DVector::zeros(n) }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.dx.len();
        let mut out = DVector::zeros(3 * n + 2);
        out[0] = self.dt;
        out.rows_mut(1, n).copy_from(&self.dx);
        out.rows_mut(1 + n, n).copy_from(&self.dv);
        out[1 + 2 * n] = self.dp_t;
        out.rows_mut(2 + 2 * n, n).copy_from(&self.dp);
        out
    }

    pub fn from_flat(flat: &DVector<f64>, n: usize) -> Self {
        Self {
            dt: flat[0],
            dx: flat.rows(1, n).into_owned(),
            dv: flat.rows(1 + n, n).into_owned(),
            dp_t: flat[1 + 2 * n],
            dp: flat.rows(2 + 2 * n, n).into_owned(),
        }
    }
}

impl CotangentP {
    pub fn zeros(n: usize) -> Self {
        Self { pi: 0.0, alpha: DVector::zeros(n), beta: DVector::zeros(n), gamma: 0.0, w: DVector::zeros(n) }
    }

    pub fn pair(&self, u: &TangentP) -> f64 {
        self.pi * u.dt + self.alpha.dot(&u.dx) + self.beta.dot(&u.dv) + self.gamma * u.dp_t + self.w.dot(&u.dp)
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.alpha.len();
        let mut out = DVector::zeros(3 * n + 2);
        out[0] = self.pi;
        out.rows_mut(1, n).copy_from(&self.alpha);
        out.rows_mut(1 + n, n).copy_from(&self.beta);
        out[1 + 2 * n] = self.gamma;
        out.rows_mut(2 + 2 * n, n).copy_from(&self.w);
        out
    }
}

/// Tangent vector `(dt, dx, dp_t, dp)` to the cotangent bundle of `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentTstarY {
    pub dt: f64,
    pub dx: DVector<f64>,
    pub dp_t: f64,
    pub dp: DVector<f64>,
}

/// Covector `(pi, alpha, gamma, w)` on the cotangent bundle of `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovectorTstarY {
    pub pi: f64,
    pub alpha: DVector<f64>,
    pub gamma: f64,
    pub w: DVector<f64>,
}

/// Coefficients `(A, B)` of a constraint family evaluated at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCoefficients {
    /// `m x n` matrix of covector rows.
    pub a: DMatrix<f64>,
    /// `m` affine coefficients paired with `dt`.
    pub b: DVector<f64>,
}

impl ConstraintCoefficients {
    pub fn count(&self) -> usize {
        self.b.len()
    }

    /// `A dx + B dt`.
    pub fn apply(&self, dt: f64, dx: &DVector<f64>) -> DVector<f64> {
        &self.a * dx + &self.b * dt
    }

    /// The `m x (n + 1)` matrix with rows `(B^r, A^r)`.
    pub fn annihilator_matrix(&self) -> DMatrix<f64> {
        let (m, n) = self.a.shape();
        let mut out = DMatrix::zeros(m, n + 1);
        out.set_column(0, &self.b);
        out.view_mut((0, 1), (m, n)).copy_from(&self.a);
        out
    }

    /// Fails unless `A` has full row rank.
    pub fn check_rank(&self) -> Result<()> {
        let m = self.count();
        if m == 0 {
            return Ok(());
        }
        let rank = numerical_rank(&self.a, RANK_RTOL);
        if rank < m {
            return Err(DiracError::DegenerateConstraint { rank, rows: m });
        }
        Ok(())
    }
}

/// A family of constraints `A(t, x, y) dx + B(t, x, y) dt = 0` where `y` is the
/// fiber coordinate (a velocity on `R x TQ`, or a momentum on `R x T*Q`).
pub trait ConstraintSet: Send + Sync {
    /// Configuration dimension `n`.
    fn dim(&self) -> usize;
    /// Number of constraints `m`.
    fn count(&self) -> usize;
    fn coefficients(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> Result<ConstraintCoefficients>;
}

/// No constraints (`m = 0`).
#[derive(Debug, Clone, Copy)]
pub struct Unconstrained {
    pub n: usize,
}

impl ConstraintSet for Unconstrained {
    fn dim(&self) -> usize {
        self.n
    }
    fn count(&self) -> usize {
        0
    }
    fn coefficients(&self, _t: f64, _x: &DVector<f64>, _y: &DVector<f64>) -> Result<ConstraintCoefficients> {
        Ok(ConstraintCoefficients { a: DMatrix::zeros(0, self.n), b: DVector::zeros(0) })
    }
}

type CoefficientFn = dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) + Send + Sync;

/// Constraint family given by a closure returning `(A, B)`.
pub struct FnConstraints {
    n: usize,
    m: usize,
    f: Box<CoefficientFn>,
}

impl FnConstraints {
    pub fn new<F>(n: usize, m: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, &DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        if m >= n {
            return Err(DiracError::InvalidParameter(format!("constraint count m = {m} must be smaller than n = {n}")));
        }
        Ok(Self { n, m, f: Box::new(f) })
    }
}

impl ConstraintSet for FnConstraints {
    fn dim(&self) -> usize {
        self.n
    }
    fn count(&self) -> usize {
        self.m
    }
    fn coefficients(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> Result<ConstraintCoefficients> {
        let (a, b) = (self.f)(t, x, y);
        if a.shape() != (self.m, self.n) {
            return Err(DiracError::DimensionMismatch { what: "constraint matrix rows", expected: self.m, got: a.nrows() });
        }
        check_len("constraint affine term", self.m, b.len())?;
        Ok(ConstraintCoefficients { a, b })
    }
}

fn evaluate(c: &dyn ConstraintSet, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> Result<ConstraintCoefficients> {
    check_len("configuration", c.dim(), x.len())?;
    check_len("fiber coordinate", c.dim(), y.len())?;
    c.coefficients(t, x, y)
}

/// `A(t, x, v) dx + B(t, x, v) dt`; zero iff `(dt, dx)` lies in the variational
/// constraint at `(t, x, v)`.
pub fn variational_constraint_residual(
    c: &dyn ConstraintSet,
    t: f64,
    x: &DVector<f64>,
    v: &DVector<f64>,
    dt: f64,
    dx: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("variation", c.dim(), dx.len())?;
    Ok(evaluate(c, t, x, v)?.apply(dt, dx))
}

/// `A(t, x, xdot) xdot + B(t, x, xdot) tdot`: the kinematic constraint obtained
/// by evaluating the variational constraint on the curve's own velocity.
pub fn kinematic_constraint_residual(
    c: &dyn ConstraintSet,
    t: f64,
    x: &DVector<f64>,
    t_dot: f64,
    x_dot: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(evaluate(c, t, x, x_dot)?.apply(t_dot, x_dot))
}

/// The raw covectors `(B^r, A^r)` spanning the annihilator of the variational
/// constraint at `(t, x, v)`.
pub fn annihilator_basis(c: &dyn ConstraintSet, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<Vec<CotangentY>> {
    let coeffs = evaluate(c, t, x, v)?;
    coeffs.check_rank()?;
    Ok((0..coeffs.count()).map(|r| CotangentY { p_t: coeffs.b[r], p: coeffs.a.row(r).transpose() }).collect())
}

/// Basis of the variational constraint `C_V(t, x, v)` as tangent vectors to `Y`.
pub fn variational_constraint_basis(coeffs: &ConstraintCoefficients) -> Vec<TangentY> {
    let kernel = null_space(&coeffs.annihilator_matrix(), RANK_RTOL);
    kernel.column_iter().map(|col| TangentY { dt: col[0], dx: col.rows(1, col.len() - 1).into_owned() }).collect()
}

/// The presymplectic form `dx ^ dp + dt ^ dp_t` on the Pontryagin bundle.
pub fn presymplectic_apply(u: &TangentP, w: &TangentP) -> f64 {
    u.dx.dot(&w.dp) - w.dx.dot(&u.dp) + u.dt * w.dp_t - w.dt * u.dp_t
}

/// The symmetric pairing `<<(u1, a1), (u2, a2)>> = <a2, u1> + <a1, u2>`.
pub fn dirac_pairing(e1: (&TangentP, &CotangentP), e2: (&TangentP, &CotangentP)) -> f64 {
    e2.1.pair(e1.0) + e1.1.pair(e2.0)
}

/// One of the conditions defining membership in the induced Dirac structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiracCondition {
    VelocityMatch,
    TimeMatch,
    FiberCovector,
    Constraint,
    Annihilator,
}

impl fmt::Display for DiracCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiracCondition::VelocityMatch => "u_x = w",
            DiracCondition::TimeMatch => "u_t = gamma",
            DiracCondition::FiberCovector => "beta = 0 (p = dL/dv)",
            DiracCondition::Constraint => "A u_x + B u_t = 0",
            DiracCondition::Annihilator => "(u_pt + pi, u_p + alpha) in annihilator",
        };
        f.write_str(s)
    }
}

/// Outcome of a membership test with least-squares multipliers and the
/// infinity-norm residual of each condition.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub member: bool,
    pub lambda: DVector<f64>,
    pub residuals: Vec<(DiracCondition, f64)>,
    pub tol: f64,
}

impl MembershipReport {
    pub fn violated(&self) -> Vec<DiracCondition> {
        self.residuals.iter().filter(|(_, r)| !(*r <= self.tol)).map(|(c, _)| *c).collect()
    }

    pub fn residual(&self, cond: DiracCondition) -> Option<f64> {
        self.residuals.iter().find(|(c, _)| *c == cond).map(|(_, r)| *r)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0_f64, |a, (_, r)| a.max(*r))
    }
}

fn inf(v: &DVector<f64>) -> f64 {
    crate::linalg::inf_norm(v)
}

/// Least-squares fit of `(u_pt + pi, u_p + alpha)` against the annihilator rows.
fn annihilator_fit(coeffs: &ConstraintCoefficients, energy_part: f64, momentum_part: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = momentum_part.len();
    let mut target = DVector::zeros(n + 1);
    target[0] = energy_part;
    target.rows_mut(1, n).copy_from(momentum_part);
    let basis = coeffs.annihilator_matrix().transpose();
    let lambda = least_squares(&basis, &target);
    let residual = if lambda.is_empty() { inf(&target) } else { inf(&(&basis * &lambda - &target)) };
    (lambda, residual)
}

fn build_report(tol: f64, lambda: DVector<f64>, residuals: Vec<(DiracCondition, f64)>) -> MembershipReport {
    let member = residuals.iter().all(|(_, r)| *r <= tol);
    MembershipReport { member, lambda, residuals, tol }
}

/// Membership of `(u, a)` in the Dirac structure induced on the Pontryagin bundle
/// by the variational constraint `c` and the presymplectic form.
pub fn dirac_membership_p(
    point: &PontryaginState,
    c: &dyn ConstraintSet,
    u: &TangentP,
    a: &CotangentP,
    tol: f64,
) -> Result<MembershipReport> {
    point.check()?;
    let n = point.dim();
    check_len("tangent dx", n, u.dx.len())?;
    check_len("covector alpha", n, a.alpha.len())?;
    let coeffs = evaluate(c, point.t, &point.x, &point.v)?;
    coeffs.check_rank()?;
    let (lambda, ann) = annihilator_fit(&coeffs, u.dp_t + a.pi, &(&u.dp + &a.alpha));
    let residuals = vec![
        (DiracCondition::VelocityMatch, inf(&(&u.dx - &a.w))),
        (DiracCondition::TimeMatch, (u.dt - a.gamma).abs()),
        (DiracCondition::FiberCovector, inf(&a.beta)),
        (DiracCondition::Constraint, inf(&coeffs.apply(u.dt, &u.dx))),
        (DiracCondition::Annihilator, ann),
    ];
    Ok(build_report(tol, lambda, residuals))
}

/// Membership in the Dirac structure induced on the cotangent bundle of `Y`.
/// `c` is evaluated on `(t, x, p)`.
pub fn dirac_membership_tstar_y(
    z: &CotangentPoint,
    c: &dyn ConstraintSet,
    u: &TangentTstarY,
    a: &CovectorTstarY,
    tol: f64,
) -> Result<MembershipReport> {
    let n = z.x.len();
    check_len("tangent dx", n, u.dx.len())?;
    check_len("covector alpha", n, a.alpha.len())?;
    let coeffs = evaluate(c, z.t, &z.x, &z.p)?;
    coeffs.check_rank()?;
    let (lambda, ann) = annihilator_fit(&coeffs, u.dp_t + a.pi, &(&u.dp + &a.alpha));
    let residuals = vec![
        (DiracCondition::VelocityMatch, inf(&(&u.dx - &a.w))),
        (DiracCondition::TimeMatch, (u.dt - a.gamma).abs()),
        (DiracCondition::Constraint, inf(&coeffs.apply(u.dt, &u.dx))),
        (DiracCondition::Annihilator, ann),
    ];
    Ok(build_report(tol, lambda, residuals))
}

/// Basis of the distribution on the Pontryagin bundle: `(dt, dx)` in the
/// variational constraint, `dv`, `dp_t`, `dp` free. Has `3n + 2 - m` elements.
pub fn delta_p_basis(coeffs: &ConstraintCoefficients) -> Vec<TangentP> {
    let n = coeffs.a.ncols();
    let mut out: Vec<TangentP> =
        variational_constraint_basis(coeffs).into_iter().map(|e| TangentP { dt: e.dt, dx: e.dx, ..TangentP::zeros(n) }).collect();
    for i in 0..n {
        let mut u = TangentP::zeros(n);
        u.dv[i] = 1.0;
        out.push(u);
    }
    let mut u = TangentP::zeros(n);
    u.dp_t = 1.0;
    out.push(u);
    for i in 0..n {
        let mut u = TangentP::zeros(n);
        u.dp[i] = 1.0;
        out.push(u);
    }
    out
}

/// The element of the Dirac structure determined by `u` in the distribution and
/// multipliers `lambda`: `w = u_x`, `gamma = u_t`, `beta = 0`,
/// `pi = lambda B - u_pt`, `alpha = lambda A - u_p`.
pub fn dirac_element(coeffs: &ConstraintCoefficients, u: &TangentP, lambda: &DVector<f64>) -> (TangentP, CotangentP) {
    let n = u.dx.len();
    let a = CotangentP {
        pi: coeffs.b.dot(lambda) - u.dp_t,
        alpha: coeffs.a.tr_mul(lambda) - &u.dp,
        beta: DVector::zeros(n),
        gamma: u.dt,
        w: u.dx.clone(),
    };
    (u.clone(), a)
}

/// Spanning set of the Dirac structure at `point`: every basis vector of the
/// distribution with zero multipliers, plus one pure annihilator element per
/// constraint.
pub fn dirac_generators(point: &PontryaginState, c: &dyn ConstraintSet) -> Result<Vec<(TangentP, CotangentP)>> {
    point.check()?;
    let coeffs = evaluate(c, point.t, &point.x, &point.v)?;
    coeffs.check_rank()?;
    let n = point.dim();
    let m = coeffs.count();
    let zero = DVector::zeros(m);
    let mut out: Vec<_> = delta_p_basis(&coeffs).iter().map(|u| dirac_element(&coeffs, u, &zero)).collect();
    for r in 0..m {
        let mut lambda = DVector::zeros(m);
        lambda[r] = 1.0;
        out.push(dirac_element(&coeffs, &TangentP::zeros(n), &lambda));
    }
    Ok(out)
}

/// Numerical rank of the generator set, which must equal `dim P = 3n + 2`.
pub fn dirac_rank(point: &PontryaginState, c: &dyn ConstraintSet) -> Result<usize> {
    let gens = dirac_generators(point, c)?;
    let n = point.dim();
    let width = 2 * (3 * n + 2);
    let mut m = DMatrix::zeros(gens.len(), width);
    for (i, (u, a)) in gens.iter().enumerate() {
        let uf = u.to_flat();
        let af = a.to_flat();
        m.view_mut((i, 0), (1, 3 * n + 2)).copy_from(&uf.transpose());
        m.view_mut((i, 3 * n + 2), (1, 3 * n + 2)).copy_from(&af.transpose());
    }
    Ok(numerical_rank(&m, RANK_RTOL))
}

/// Largest `|<<e_i, e_j>>|` over all pairs (including `i = j`).
pub fn isotropy_defect(elements: &[(TangentP, CotangentP)]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, e1) in elements.iter().enumerate() {
        for e2 in &elements[i..] {
            worst = worst.max(dirac_pairing((&e1.0, &e1.1), (&e2.0, &e2.1)).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_row(a: Vec<f64>, b: f64) -> FnConstraints {
        let n = a.len();
        FnConstraints::new(n, 1, move |_, _, _| (DMatrix::from_row_slice(1, n, &a), dvector![b])).unwrap()
    }

    fn zeros(n: usize) -> DVector<f64> {
        DVector::zeros(n)
    }

    #[test]
    fn variational_residual_examples() {
        let c = single_row(vec![1.0, 0.0], 0.0);
        let r = variational_constraint_residual(&c, 0.0, &zeros(2), &zeros(2), 7.0, &dvector![0.0, 3.0]).unwrap();
        assert_eq!(r[0], 0.0);
        let c = single_row(vec![1.0, 0.0], 2.0);
        let r = variational_constraint_residual(&c, 0.0, &zeros(2), &zeros(2), 1.0, &dvector![1.0, 0.0]).unwrap();
        assert_eq!(r[0], 3.0);
    }

    #[test]
    fn kinematic_residual_example() {
        let c = single_row(vec![1.0, 0.0], -1.0);
        let r = kinematic_constraint_residual(&c, 0.0, &zeros(2), 1.0, &dvector![1.0, 5.0]).unwrap();
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let c = single_row(vec![1.0, 0.0], 0.0);
        let err = variational_constraint_residual(&c, 0.0, &zeros(3), &zeros(2), 1.0, &zeros(2)).unwrap_err();
        assert!(matches!(err, DiracError::DimensionMismatch { .. }));
    }

    #[test]
    fn annihilator_reads_off_rows() {
        let c = single_row(vec![1.0, 0.0], 2.0);
        let ann = annihilator_basis(&c, 0.0, &zeros(2), &zeros(2)).unwrap();
        assert_eq!(ann.len(), 1);
        assert_eq!(ann[0].p_t, 2.0);
        assert_eq!(ann[0].p, dvector![1.0, 0.0]);
    }

    #[test]
    fn annihilator_rejects_rank_deficiency() {
        let c = FnConstraints::new(3, 2, |_, _, _| (DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0]), dvector![0.0, 1.0]))
            .unwrap();
        let err = annihilator_basis(&c, 0.0, &zeros(3), &zeros(3)).unwrap_err();
        assert_eq!(err, DiracError::DegenerateConstraint { rank: 1, rows: 2 });
    }

    #[test]
    fn constraint_count_must_be_below_dimension() {
        assert!(FnConstraints::new(2, 2, |_, _, _| (DMatrix::zeros(2, 2), zeros(2))).is_err());
    }

    #[test]
    fn annihilator_pairs_to_zero_with_constraint_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b = rng.gen_range(-3.0..3.0);
            let c = single_row(a, b);
            let coeffs = c.coefficients(0.0, &zeros(4), &zeros(4)).unwrap();
            let ann = annihilator_basis(&c, 0.0, &zeros(4), &zeros(4)).unwrap();
            for e in variational_constraint_basis(&coeffs) {
                assert!(ann[0].pair(&e).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn covectors_orthogonal_to_constraint_lie_in_annihilator_span() {
        let c = FnConstraints::new(3, 2, |_, _, _| (DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.5, 0.0, 2.0, 1.0]), dvector![0.3, -0.7]))
            .unwrap();
        let coeffs = c.coefficients(0.0, &zeros(3), &zeros(3)).unwrap();
        let basis = variational_constraint_basis(&coeffs);
        assert_eq!(basis.len(), 2);
        // Orthogonal complement of the constraint basis in (dt, dx) space.
        let mut m = DMatrix::zeros(basis.len(), 4);
        for (i, e) in basis.iter().enumerate() {
            m[(i, 0)] = e.dt;
            m.view_mut((i, 1), (1, 3)).copy_from(&e.dx.transpose());
        }
        let complement = null_space(&m, RANK_RTOL);
        assert_eq!(complement.ncols(), 2);
        for col in complement.column_iter() {
            let (_, res) = annihilator_fit(&coeffs, col[0], &col.rows(1, 3).into_owned());
            assert!(res <= 1e-10, "residual {res}");
        }
    }

    #[test]
    fn presymplectic_examples() {
        let mut u = TangentP::zeros(2);
        u.dt = 1.0;
        let mut w = TangentP::zeros(2);
        w.dp_t = 1.0;
        assert_eq!(presymplectic_apply(&u, &w), 1.0);
        assert_eq!(presymplectic_apply(&u, &u), 0.0);
        let mut u = TangentP::zeros(2);
        u.dx[0] = 1.0;
        let mut w = TangentP::zeros(2);
        w.dp[0] = 1.0;
        assert_eq!(presymplectic_apply(&u, &w), 1.0);
    }

    #[test]
    fn pairing_examples() {
        let mut u = TangentP::zeros(2);
        u.dx[0] = 1.0;
        let zero_a = CotangentP::zeros(2);
        assert_eq!(dirac_pairing((&u, &zero_a), (&u, &zero_a)), 0.0);
        let mut a = CotangentP::zeros(2);
        a.w[0] = 1.0;
        // <a, u> picks w against dp, which is zero; use alpha against dx.
        let mut a2 = CotangentP::zeros(2);
        a2.alpha[0] = 1.0;
        assert_eq!(dirac_pairing((&u, &zero_a), (&TangentP::zeros(2), &a2)), 1.0);
        assert_eq!(dirac_pairing((&TangentP::zeros(2), &a), (&u, &zero_a)), 0.0);
    }

    fn random_tangent(rng: &mut ChaCha8Rng, n: usize) -> TangentP {
        let mut g = || rng.gen_range(-1.0..1.0);
        TangentP {
            dt: g(),
            dx: DVector::from_fn(n, |_, _| g()),
            dv: DVector::from_fn(n, |_, _| g()),
            dp_t: g(),
            dp: DVector::from_fn(n, |_, _| g()),
        }
    }

    fn random_covector(rng: &mut ChaCha8Rng, n: usize) -> CotangentP {
        let mut g = || rng.gen_range(-1.0..1.0);
        CotangentP {
            pi: g(),
            alpha: DVector::from_fn(n, |_, _| g()),
            beta: DVector::from_fn(n, |_, _| g()),
            gamma: g(),
            w: DVector::from_fn(n, |_, _| g()),
        }
    }

    #[test]
    fn pairing_is_symmetric_and_form_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (u1, u2) = (random_tangent(&mut rng, 3), random_tangent(&mut rng, 3));
            let (a1, a2) = (random_covector(&mut rng, 3), random_covector(&mut rng, 3));
            assert_eq!(dirac_pairing((&u1, &a1), (&u2, &a2)), dirac_pairing((&u2, &a2), (&u1, &a1)));
            assert!((presymplectic_apply(&u1, &u2) + presymplectic_apply(&u2, &u1)).abs() <= 1e-15);
        }
    }

    fn point(n: usize) -> PontryaginState {
        PontryaginState {
            t: 0.4,
            x: DVector::from_element(n, 0.3),
            v: DVector::from_element(n, -0.2),
            p_t: 1.0,
            p: DVector::from_element(n, 0.1),
        }
    }

    #[test]
    fn zero_element_is_member() {
        let c = single_row(vec![1.0, 2.0, 0.0], 0.5);
        let rep = dirac_membership_p(&point(3), &c, &TangentP::zeros(3), &CotangentP::zeros(3), 1e-12).unwrap();
        assert!(rep.member);
        assert_eq!(rep.lambda[0], 0.0);
    }

    #[test]
    fn constructed_element_is_member_and_beta_perturbation_is_not() {
        let c = single_row(vec![1.0, 2.0, 0.0], 0.5);
        let coeffs = c.coefficients(0.4, &point(3).x, &point(3).v).unwrap();
        let basis = delta_p_basis(&coeffs);
        let mut u = TangentP::zeros(3);
        for (k, b) in basis.iter().enumerate() {
            let s = 0.1 * (k as f64 + 1.0);
            u = TangentP::from_flat(&(u.to_flat() + b.to_flat() * s), 3);
        }
        let (u, a) = dirac_element(&coeffs, &u, &dvector![1.7]);
        let rep = dirac_membership_p(&point(3), &c, &u, &a, 1e-9).unwrap();
        assert!(rep.member, "{rep:?}");
        assert!((rep.lambda[0] - 1.7).abs() < 1e-10);

        let mut bad = a.clone();
        bad.beta[1] += 1e-3;
        let rep = dirac_membership_p(&point(3), &c, &u, &bad, 1e-9).unwrap();
        assert!(!rep.member);
        assert_eq!(rep.violated(), vec![DiracCondition::FiberCovector]);
    }

    #[test]
    fn cotangent_membership() {
        let c = single_row(vec![1.0, -1.0], 0.25);
        let z = CotangentPoint { t: 0.0, x: dvector![1.0, 2.0], p_t: 0.0, p: dvector![0.5, 0.5] };
        let zero_u = TangentTstarY { dt: 0.0, dx: zeros(2), dp_t: 0.0, dp: zeros(2) };
        let zero_a = CovectorTstarY { pi: 0.0, alpha: zeros(2), gamma: 0.0, w: zeros(2) };
        assert!(dirac_membership_tstar_y(&z, &c, &zero_u, &zero_a, 1e-12).unwrap().member);

        // dt = 1, dx with dx0 - dx1 + 0.25 = 0; lambda = 0.5.
        let lambda = 0.5;
        let u = TangentTstarY { dt: 1.0, dx: dvector![0.75, 1.0], dp_t: 0.3, dp: dvector![-0.2, 0.9] };
        let a = CovectorTstarY { pi: lambda * 0.25 - u.dp_t, alpha: dvector![lambda, -lambda] - &u.dp, gamma: u.dt, w: u.dx.clone() };
        let rep = dirac_membership_tstar_y(&z, &c, &u, &a, 1e-12).unwrap();
        assert!(rep.member);
        assert!((rep.lambda[0] - 0.5).abs() < 1e-12);

        let mut u_bad = u.clone();
        u_bad.dx[0] += 1e-2;
        let mut a_bad = a.clone();
        a_bad.w = u_bad.dx.clone();
        let rep = dirac_membership_tstar_y(&z, &c, &u_bad, &a_bad, 1e-9).unwrap();
        assert!(!rep.member);
        assert_eq!(rep.violated(), vec![DiracCondition::Constraint]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn generators_are_isotropic_and_full_rank(
            a in proptest::collection::vec(-3.0f64..3.0, 8),
            b in proptest::collection::vec(-3.0f64..3.0, 2),
        ) {
            let n = 4;
            let am = DMatrix::from_row_slice(2, n, &a);
            prop_assume!(numerical_rank(&am, RANK_RTOL) == 2);
            let bv = DVector::from_vec(b);
            let c = FnConstraints::new(n, 2, move |_, _, _| (am.clone(), bv.clone())).unwrap();
            let gens = dirac_generators(&point(n), &c).unwrap();
            prop_assert_eq!(gens.len(), 3 * n + 2);
            prop_assert!(isotropy_defect(&gens) <= 1e-12);
            prop_assert_eq!(dirac_rank(&point(n), &c).unwrap(), 3 * n + 2);
        }
    }
}
