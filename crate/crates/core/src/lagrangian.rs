//! Time-dependent Lagrangians and Hamiltonians with their energies, the
//! covariant Legendre transform, the Dirac differential and a
//! finite-difference derivative validator.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, DiracError, Result};
use crate::geometry::{CotangentP, CotangentPoint, CovectorTstarY, PontryaginState};
use crate::linalg::{inf_norm, numerical_rank, RANK_RTOL};

/// A Lagrangian `L(t, x, v)` with analytic first partials and velocity Hessian.
pub trait Lagrangian: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> f64;
    fn d_t(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> f64;
    fn d_x(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    fn d_v(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    fn d_vv(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;

    /// Velocity components on which the Hessian is nonsingular. Legendre
    /// inversion solves only for these and passes the others through.
    fn regular_block(&self) -> Vec<usize> {
        (0..self.dim()).collect()
    }
}

/// A Hamiltonian `H(t, x, p)` with analytic first partials.
pub trait Hamiltonian: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, t: f64, x: &DVector<f64>, p: &DVector<f64>) -> f64;
    fn d_t(&self, t: f64, x: &DVector<f64>, p: &DVector<f64>) -> f64;
    fn d_x(&self, t: f64, x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64>;
    fn d_p(&self, t: f64, x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64>;
}

/// An external force `F(t, x, v)` acting on the configuration.
pub trait ExternalForce: Send + Sync {
    fn dim(&self) -> usize;
    fn force(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
}

/// `<dL/dv, v> - L`.
pub fn lagrangian_energy(l: &dyn Lagrangian, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    l.d_v(t, x, v).dot(v) - l.value(t, x, v)
}

/// `p_t + <p, v> - L(t, x, v)`.
pub fn covariant_energy(l: &dyn Lagrangian, s: &PontryaginState) -> f64 {
    s.p_t + s.p.dot(&s.v) - l.value(s.t, &s.x, &s.v)
}

/// Differential of [`covariant_energy`]: `(-dL/dt, -dL/dx, p - dL/dv, 1, v)`.
pub fn d_covariant_energy(l: &dyn Lagrangian, s: &PontryaginState) -> CotangentP {
    CotangentP {
        pi: -l.d_t(s.t, &s.x, &s.v),
        alpha: -l.d_x(s.t, &s.x, &s.v),
        beta: &s.p - l.d_v(s.t, &s.x, &s.v),
        gamma: 1.0,
        w: s.v.clone(),
    }
}

/// `(t, x, -E_L, dL/dv)`.
pub fn covariant_legendre(l: &dyn Lagrangian, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> CotangentPoint {
    CotangentPoint { t, x: x.clone(), p_t: -lagrangian_energy(l, t, x, v), p: l.d_v(t, x, v) }
}

/// A point of `T*TY` in coordinates `(t, x, dt, dx, a_t, a_x, b_t, b_x)`,
/// where `(a_t, a_x)` are conjugate to `(t, x)` and `(b_t, b_x)` to `(dt, dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentCotangentPoint {
    pub t: f64,
    pub x: DVector<f64>,
    pub dt: f64,
    pub dx: DVector<f64>,
    pub a_t: f64,
    pub a_x: DVector<f64>,
    pub b_t: f64,
    pub b_x: DVector<f64>,
}

/// The lift `(t, x, 1, v, dL/dt, dL/dx, -E_L, dL/dv)` of the Lagrangian into `T*TY`.
pub fn lagrangian_lift(l: &dyn Lagrangian, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> TangentCotangentPoint {
    TangentCotangentPoint {
        t,
        x: x.clone(),
        dt: 1.0,
        dx: v.clone(),
        a_t: l.d_t(t, x, v),
        a_x: l.d_x(t, x, v),
        b_t: -lagrangian_energy(l, t, x, v),
        b_x: l.d_v(t, x, v),
    }
}

/// The canonical map `T*TY -> T*T*Y`,
/// `(t, x, dt, dx, a_t, a_x, b_t, b_x) -> (t, x, b_t, b_x, -a_t, -a_x, dt, dx)`.
pub fn cotangent_flip(z: &TangentCotangentPoint) -> (CotangentPoint, CovectorTstarY) {
    (
        CotangentPoint { t: z.t, x: z.x.clone(), p_t: z.b_t, p: z.b_x.clone() },
        CovectorTstarY { pi: -z.a_t, alpha: -&z.a_x, gamma: z.dt, w: z.dx.clone() },
    )
}

/// The Dirac differential of `L`: base point `(t, x, -E_L, dL/dv)` and
/// covector `(-dL/dt, -dL/dx, 1, v)`.
pub fn dirac_differential(l: &dyn Lagrangian, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> (CotangentPoint, CovectorTstarY) {
    cotangent_flip(&lagrangian_lift(l, t, x, v))
}

/// `p_t + H(t, x, p)` and its differential `(dH/dt, dH/dx, 1, dH/dp)`.
pub fn covariant_hamiltonian(h: &dyn Hamiltonian, z: &CotangentPoint) -> (f64, CovectorTstarY) {
    let value = z.p_t + h.value(z.t, &z.x, &z.p);
    let diff = CovectorTstarY { pi: h.d_t(z.t, &z.x, &z.p), alpha: h.d_x(z.t, &z.x, &z.p), gamma: 1.0, w: h.d_p(z.t, &z.x, &z.p) };
    (value, diff)
}

pub const LEGENDRE_TOL: f64 = 1e-10;
pub const LEGENDRE_MAX_ITER: usize = 50;

/// Solves `dL/dv(t, x, v) = p_target` for the components of `v` in the
/// regular block, starting from `v_guess`. Components outside the block are
/// copied from `v_guess`. The guess selects the branch when several roots exist.
pub fn legendre_invert(
    l: &dyn Lagrangian,
    t: f64,
    x: &DVector<f64>,
    p_target: &DVector<f64>,
    v_guess: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = l.dim();
    check_len("configuration", n, x.len())?;
    check_len("momentum", n, p_target.len())?;
    check_len("velocity guess", n, v_guess.len())?;
    let block = l.regular_block();
    let k = block.len();
    let mut v = v_guess.clone();
    if k == 0 {
        return Ok(v);
    }
    let tol = LEGENDRE_TOL * (1.0 + inf_norm(p_target)).min(1e3);
    let mut residual = f64::INFINITY;
    for _ in 0..=LEGENDRE_MAX_ITER {
        let g = l.d_v(t, x, &v);
        let r = DVector::from_fn(k, |i, _| g[block[i]] - p_target[block[i]]);
        residual = inf_norm(&r);
        if residual <= tol {
            return Ok(v);
        }
        let hess = l.d_vv(t, x, &v);
        let hb = DMatrix::from_fn(k, k, |i, j| hess[(block[i], block[j])]);
        if numerical_rank(&hb, RANK_RTOL) < k {
            return Err(DiracError::NotHyperregular);
        }
        let delta = hb.lu().solve(&r).ok_or(DiracError::NotHyperregular)?;
        for (i, &b) in block.iter().enumerate() {
            v[b] -= delta[i];
        }
    }
    Err(DiracError::LegendreDivergence { iterations: LEGENDRE_MAX_ITER, residual })
}

/// Axis-aligned box from which derivative check points are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub t: (f64, f64),
    pub x: Vec<(f64, f64)>,
    /// Velocity (for Lagrangians) or momentum (for Hamiltonians) ranges.
    pub y: Vec<(f64, f64)>,
}

impl SampleBox {
    /// Box of half-width `radius * (1 + |c|)` around each center coordinate.
    pub fn around(t: f64, x: &DVector<f64>, y: &DVector<f64>, radius: f64) -> Self {
        let w = |c: f64| (c - radius * (1.0 + c.abs()), c + radius * (1.0 + c.abs()));
        Self { t: w(t), x: x.iter().map(|&c| w(c)).collect(), y: y.iter().map(|&c| w(c)).collect() }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, DVector<f64>, DVector<f64>) {
        let mut g = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let t = g(self.t);
        let x = DVector::from_iterator(self.x.len(), self.x.iter().map(|&r| g(r)));
        let y = DVector::from_iterator(self.y.len(), self.y.iter().map(|&r| g(r)));
        (t, x, y)
    }
}

/// Which analytic partial a derivative-check entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partial {
    Time,
    Position,
    Velocity,
    VelocityHessian,
    Momentum,
}

impl fmt::Display for Partial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partial::Time => "d_t",
            Partial::Position => "d_x",
            Partial::Velocity => "d_v",
            Partial::VelocityHessian => "d_vv",
            Partial::Momentum => "d_p",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeLocation {
    pub partial: Partial,
    /// Flat component index (row-major for the Hessian).
    pub component: usize,
    pub sample: usize,
    pub analytic: f64,
    pub finite_difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub samples: usize,
    pub threshold: f64,
    pub max_rel_error: f64,
    pub worst: Option<DerivativeLocation>,
    pub hessian_asymmetry: f64,
    pub passed: bool,
}

impl fmt::Display for DerivativeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} samples, max relative error {:e}", self.samples, self.max_rel_error)?;
        if let Some(w) = &self.worst {
            write!(
                f,
                " at {}[{}] (sample {}, analytic {}, finite difference {})",
                w.partial, w.component, w.sample, w.analytic, w.finite_difference
            )?;
        }
        write!(f, ", Hessian asymmetry {:e}: {}", self.hessian_asymmetry, if self.passed { "pass" } else { "fail" })
    }
}

pub const DERIVATIVE_THRESHOLD: f64 = 1e-6;
pub const HESSIAN_SYMMETRY_TOL: f64 = 1e-10;

/// Central-difference step at `c` for a coordinate sampled from `range`. It
/// shrinks below `1e-6 (1 + |c|)` for small coordinates in narrow ranges,
/// where the function may curve on the scale of the coordinate itself.
fn fd_step(c: f64, (lo, hi): (f64, f64)) -> f64 {
    let h = 1e-6 * (c.abs() + (hi - lo)).min(1.0 + c.abs());
    if h > 0.0 {
        h
    } else {
        1e-6
    }
}

struct Tracker {
    max: f64,
    worst: Option<DerivativeLocation>,
}

impl Tracker {
    fn record(&mut self, partial: Partial, component: usize, sample: usize, analytic: f64, fd: f64) {
        let err = (fd - analytic).abs() / (1.0 + analytic.abs());
        if !(err <= self.max) {
            self.max = if err.is_nan() { f64::INFINITY } else { err };
            self.worst = Some(DerivativeLocation { partial, component, sample, analytic, finite_difference: fd });
        }
    }
}

fn central<F: Fn(f64) -> f64>(f: F, c: f64, range: (f64, f64)) -> f64 {
    let h = fd_step(c, range);
    (f(c + h) - f(c - h)) / (2.0 * h)
}

fn shifted(v: &DVector<f64>, i: usize, c: f64) -> DVector<f64> {
    let mut out = v.clone();
    out[i] = c;
    out
}

/// Compares the analytic partials of `l` with central finite differences at
/// `samples` points drawn from `domain`. Relative error is
/// `|fd - analytic| / (1 + |analytic|)`.
pub fn check_derivatives(l: &dyn Lagrangian, domain: &SampleBox, samples: usize, seed: u64) -> DerivativeReport {
    let n = l.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tr = Tracker { max: 0.0, worst: None };
    let mut asym = 0.0_f64;
    for s in 0..samples {
        let (t, x, v) = domain.draw(&mut rng);
        tr.record(Partial::Time, 0, s, l.d_t(t, &x, &v), central(|c| l.value(c, &x, &v), t, domain.t));
        let dx = l.d_x(t, &x, &v);
        let dv = l.d_v(t, &x, &v);
        let hess = l.d_vv(t, &x, &v);
        for i in 0..n {
            tr.record(Partial::Position, i, s, dx[i], central(|c| l.value(t, &shifted(&x, i, c), &v), x[i], domain.x[i]));
            tr.record(Partial::Velocity, i, s, dv[i], central(|c| l.value(t, &x, &shifted(&v, i, c)), v[i], domain.y[i]));
            for j in 0..n {
                let fd = central(|c| l.d_v(t, &x, &shifted(&v, j, c))[i], v[j], domain.y[j]);
                tr.record(Partial::VelocityHessian, i * n + j, s, hess[(i, j)], fd);
                asym = asym.max((hess[(i, j)] - hess[(j, i)]).abs());
            }
        }
    }
    let passed = tr.max <= DERIVATIVE_THRESHOLD && asym <= HESSIAN_SYMMETRY_TOL;
    DerivativeReport { samples, threshold: DERIVATIVE_THRESHOLD, max_rel_error: tr.max, worst: tr.worst, hessian_asymmetry: asym, passed }
}

/// Hamiltonian counterpart of [`check_derivatives`].
pub fn check_hamiltonian_derivatives(h: &dyn Hamiltonian, domain: &SampleBox, samples: usize, seed: u64) -> DerivativeReport {
    let n = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tr = Tracker { max: 0.0, worst: None };
    for s in 0..samples {
        let (t, x, p) = domain.draw(&mut rng);
        tr.record(Partial::Time, 0, s, h.d_t(t, &x, &p), central(|c| h.value(c, &x, &p), t, domain.t));
        let dx = h.d_x(t, &x, &p);
        let dp = h.d_p(t, &x, &p);
        for i in 0..n {
            tr.record(Partial::Position, i, s, dx[i], central(|c| h.value(t, &shifted(&x, i, c), &p), x[i], domain.x[i]));
            tr.record(Partial::Momentum, i, s, dp[i], central(|c| h.value(t, &x, &shifted(&p, i, c)), p[i], domain.y[i]));
        }
    }
    let passed = tr.max <= DERIVATIVE_THRESHOLD;
    DerivativeReport { samples, threshold: DERIVATIVE_THRESHOLD, max_rel_error: tr.max, worst: tr.worst, hessian_asymmetry: 0.0, passed }
}

/// Mechanical fixtures: a diagonal-mass particle in a time-modulated
/// quadratic-plus-quartic potential, its Hamiltonian, and an affine
/// time-dependent constraint.
pub mod fixtures {
    use super::*;
    use crate::geometry::{ConstraintCoefficients, ConstraintSet};

    /// `V(t, x) = 1/2 k(t) |x|^2 + 1/4 g |x|^4` with
    /// `k(t) = k0 (1 + eps sin(omega t))`.
    #[derive(Debug, Clone, PartialEq)]
    pub struct Potential {
        pub stiffness: f64,
        pub quartic: f64,
        pub modulation: f64,
        pub frequency: f64,
    }

    impl Potential {
        pub fn free() -> Self {
            Self { stiffness: 0.0, quartic: 0.0, modulation: 0.0, frequency: 0.0 }
        }

        fn k(&self, t: f64) -> f64 {
            self.stiffness * (1.0 + self.modulation * (self.frequency * t).sin())
        }

        fn dk(&self, t: f64) -> f64 {
            self.stiffness * self.modulation * self.frequency * (self.frequency * t).cos()
        }

        pub fn value(&self, t: f64, x: &DVector<f64>) -> f64 {
            let r2 = x.norm_squared();
            0.5 * self.k(t) * r2 + 0.25 * self.quartic * r2 * r2
        }

        pub fn d_t(&self, t: f64, x: &DVector<f64>) -> f64 {
            0.5 * self.dk(t) * x.norm_squared()
        }

        pub fn d_x(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
            x * (self.k(t) + self.quartic * x.norm_squared())
        }
    }

    /// `L = 1/2 sum m_i v_i^2 - V(t, x)`.
    #[derive(Debug, Clone, PartialEq)]
    pub struct ParticleLagrangian {
        pub mass: DVector<f64>,
        pub potential: Potential,
    }

    impl ParticleLagrangian {
        pub fn free(n: usize) -> Self {
            Self { mass: DVector::from_element(n, 1.0), potential: Potential::free() }
        }
    }

    impl Lagrangian for ParticleLagrangian {
        fn dim(&self) -> usize {
            self.mass.len()
        }
        fn value(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
            0.5 * self.mass.zip_fold(v, 0.0, |acc, m, vi| acc + m * vi * vi) - self.potential.value(t, x)
        }
        fn d_t(&self, t: f64, x: &DVector<f64>, _v: &DVector<f64>) -> f64 {
            -self.potential.d_t(t, x)
        }
        fn d_x(&self, t: f64, x: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
            -self.potential.d_x(t, x)
        }
        fn d_v(&self, _t: f64, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            self.mass.component_mul(v)
        }
        fn d_vv(&self, _t: f64, _x: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_diagonal(&self.mass)
        }
    }

    /// `H = sum p_i^2 / (2 m_i) + V(t, x)`, the Legendre dual of
    /// [`ParticleLagrangian`].
    #[derive(Debug, Clone, PartialEq)]
    pub struct ParticleHamiltonian {
        pub mass: DVector<f64>,
        pub potential: Potential,
    }

    impl From<&ParticleLagrangian> for ParticleHamiltonian {
        fn from(l: &ParticleLagrangian) -> Self {
            Self { mass: l.mass.clone(), potential: l.potential.clone() }
        }
    }

    impl Hamiltonian for ParticleHamiltonian {
        fn dim(&self) -> usize {
            self.mass.len()
        }
        fn value(&self, t: f64, x: &DVector<f64>, p: &DVector<f64>) -> f64 {
            0.5 * self.mass.zip_fold(p, 0.0, |acc, m, pi| acc + pi * pi / m) + self.potential.value(t, x)
        }
        fn d_t(&self, t: f64, x: &DVector<f64>, _p: &DVector<f64>) -> f64 {
            self.potential.d_t(t, x)
        }
        fn d_x(&self, t: f64, x: &DVector<f64>, _p: &DVector<f64>) -> DVector<f64> {
            self.potential.d_x(t, x)
        }
        fn d_p(&self, _t: f64, _x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
            p.component_div(&self.mass)
        }
    }

    /// One constraint on `n >= 2` coordinates with `A = (t, -1, 0, ...)` and
    /// `B = b0 + b1 sin(omega t)`, i.e. `xdot_2 = t xdot_1 + B(t)`.
    /// It does not depend on the fiber coordinate, so it serves on velocities
    /// and momenta alike.
    #[derive(Debug, Clone, PartialEq)]
    pub struct TimeAffineConstraint {
        pub n: usize,
        pub offset: f64,
        pub amplitude: f64,
        pub frequency: f64,
    }

    impl TimeAffineConstraint {
        pub fn homogeneous(n: usize) -> Self {
            Self { n, offset: 0.0, amplitude: 0.0, frequency: 0.0 }
        }

        pub fn b(&self, t: f64) -> f64 {
            self.offset + self.amplitude * (self.frequency * t).sin()
        }
    }

    impl ConstraintSet for TimeAffineConstraint {
        fn dim(&self) -> usize {
            self.n
        }
        fn count(&self) -> usize {
            1
        }
        fn coefficients(&self, t: f64, _x: &DVector<f64>, _y: &DVector<f64>) -> Result<ConstraintCoefficients> {
            let mut a = DMatrix::zeros(1, self.n);
            a[(0, 0)] = t;
            a[(0, 1)] = -1.0;
            Ok(ConstraintCoefficients { a, b: DVector::from_element(1, self.b(t)) })
        }
    }
}
