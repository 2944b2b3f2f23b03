//! One-stage Gauss collocation of the Dirac systems.
//!
//! Each step solves for the new node `(x1, p1, p_t1)` together with the stage
//! velocity and the multipliers. Every equation, including the constraint, is
//! imposed at the stage point `(t + h/2, (x0 + x1)/2, v, (p_t0 + p_t1)/2,
//! (p0 + p1)/2)` with time derivatives replaced by difference quotients. On
//! hyperregular systems this is the implicit midpoint rule on `(x, p, p_t)`,
//! and the three formulations produce the same discrete trajectory.

use nalgebra::DVector;

use super::{hamilton_dirac_residual, lagrange_dirac_residual, pontryagin_dirac_residual, Formulation, MomentumConstraints, SectionRate};
use crate::error::{check_len, DiracError, Result};
use crate::geometry::{ConstraintSet, CotangentPoint, PontryaginState};
use crate::lagrangian::{legendre_invert, ExternalForce, Hamiltonian, Lagrangian};
use crate::linalg::{newton, NewtonFailure, NewtonOptions};

/// Reconstructs the full velocity at a new node from `(t, x, p)`. The default
/// inverts the Legendre map on the regular block and keeps the stage velocity
/// elsewhere.
pub trait NodeVelocity: Send + Sync {
    fn node_velocity(&self, t: f64, x: &DVector<f64>, p: &DVector<f64>, v_stage: &DVector<f64>) -> Result<DVector<f64>>;
}

/// The data defining a Dirac system: Lagrangian, velocity constraints, optional
/// external force, optional Legendre-dual Hamiltonian and optional node
/// velocity reconstruction.
#[derive(Clone, Copy)]
pub struct DiracSystem<'a> {
    pub lagrangian: &'a dyn Lagrangian,
    pub constraints: &'a dyn ConstraintSet,
    pub force: Option<&'a dyn ExternalForce>,
    pub hamiltonian: Option<&'a dyn Hamiltonian>,
    pub node_velocity: Option<&'a dyn NodeVelocity>,
}

impl<'a> DiracSystem<'a> {
    pub fn new(lagrangian: &'a dyn Lagrangian, constraints: &'a dyn ConstraintSet) -> Self {
        Self { lagrangian, constraints, force: None, hamiltonian: None, node_velocity: None }
    }

    pub fn with_force(mut self, force: &'a dyn ExternalForce) -> Self {
        self.force = Some(force);
        self
    }

    pub fn with_hamiltonian(mut self, h: &'a dyn Hamiltonian) -> Self {
        self.hamiltonian = Some(h);
        self
    }

    pub fn with_node_velocity(mut self, nv: &'a dyn NodeVelocity) -> Self {
        self.node_velocity = Some(nv);
        self
    }

    pub fn dim(&self) -> usize {
        self.lagrangian.dim()
    }

    fn check(&self) -> Result<()> {
        let n = self.lagrangian.dim();
        check_len("constraint dimension", n, self.constraints.dim())?;
        if let Some(f) = self.force {
            check_len("external force dimension", n, f.dim())?;
        }
        if let Some(h) = self.hamiltonian {
            check_len("Hamiltonian dimension", n, h.dim())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOptions {
    pub newton: NewtonOptions,
    /// Characteristic magnitude of each configuration component. Rows with
    /// units of `x_i / s` are divided by it and momentum rows multiplied by it.
    pub scale: Option<DVector<f64>>,
    /// Drop `p_t` from the Newton system and update it after the solve.
    pub post_integrate_p_t: bool,
}

/// Stage data of one step: the collocation point, difference quotients and
/// multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub state: PontryaginState,
    pub rate: SectionRate,
    pub lambda: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub node: PontryaginState,
    pub stage: Stage,
}

/// Node states `t0, t0 + h, ...` and the stage between each consecutive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub nodes: Vec<PontryaginState>,
    pub stages: Vec<Stage>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.stages.len()
    }
}

fn stage_point(
    node: &PontryaginState,
    h: f64,
    x1: &DVector<f64>,
    v: DVector<f64>,
    p1: &DVector<f64>,
    p_t1: f64,
) -> (PontryaginState, SectionRate) {
    let mid = PontryaginState { t: node.t + 0.5 * h, x: (&node.x + x1) * 0.5, v, p_t: 0.5 * (node.p_t + p_t1), p: (&node.p + p1) * 0.5 };
    let rate = SectionRate { t_dot: 1.0, x_dot: (x1 - &node.x) / h, p_t_dot: (p_t1 - node.p_t) / h, p_dot: (p1 - &node.p) / h };
    (mid, rate)
}

/// Row weights `(kinematic, momentum)` for each configuration component.
fn weights(opts: &StepOptions, n: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    match &opts.scale {
        None => Ok((DVector::from_element(n, 1.0), DVector::from_element(n, 1.0))),
        Some(s) => {
            check_len("state scale", n, s.len())?;
            if s.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
                return Err(DiracError::InvalidParameter("state scale entries must be positive".into()));
            }
            Ok((s.map(|c| 1.0 / c), s.clone()))
        }
    }
}

pub(crate) fn map_failure(step: usize, f: NewtonFailure<DiracError>) -> DiracError {
    match f {
        NewtonFailure::Diverged { iterations, residual } => DiracError::NewtonDivergence { step, iterations, residual },
        NewtonFailure::Singular => DiracError::SingularJacobian { step },
        NewtonFailure::Residual(e) => e,
    }
}

/// Advances `node` by one step of size `h` with the chosen formulation.
/// `step` is only used to label errors; `lambda_guess` seeds the multipliers.
pub fn solve_step(
    sys: &DiracSystem<'_>,
    formulation: Formulation,
    node: &PontryaginState,
    h: f64,
    opts: &StepOptions,
    step: usize,
    lambda_guess: Option<&DVector<f64>>,
) -> Result<StepResult> {
    sys.check()?;
    node.check()?;
    let n = sys.dim();
    check_len("node configuration", n, node.x.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(DiracError::InvalidParameter(format!("step h = {h} must be positive")));
    }
    let m = sys.constraints.count();
    let lam0 = match lambda_guess {
        Some(l) => {
            check_len("multiplier guess", m, l.len())?;
            l.clone()
        }
        None => DVector::zeros(m),
    };
    match formulation {
        Formulation::Pontryagin | Formulation::LagrangeDirac => lagrangian_step(sys, formulation, node, h, opts, step, lam0),
        Formulation::HamiltonDirac => hamiltonian_step(sys, node, h, opts, step, lam0),
    }
}

fn lagrangian_step(
    sys: &DiracSystem<'_>,
    formulation: Formulation,
    node: &PontryaginState,
    h: f64,
    opts: &StepOptions,
    step: usize,
    lam0: DVector<f64>,
) -> Result<StepResult> {
    let n = sys.dim();
    let m = sys.constraints.count();
    let l = sys.lagrangian;
    let post = opts.post_integrate_p_t;
    let (wk, wm) = weights(opts, n)?;
    let with_pt = usize::from(!post);
    let unpack = |u: &DVector<f64>| {
        let x1 = u.rows(0, n).into_owned();
        let v = u.rows(n, n).into_owned();
        let p1 = u.rows(2 * n, n).into_owned();
        let p_t1 = if post { node.p_t } else { u[3 * n] };
        let lam = u.rows(3 * n + with_pt, m).into_owned();
        (x1, v, p1, p_t1, lam)
    };
    let residual = |u: &DVector<f64>| -> Result<DVector<f64>> {
        let (x1, v, p1, p_t1, lam) = unpack(u);
        let (mid, rate) = stage_point(node, h, &x1, v, &p1, p_t1);
        let mut out = Vec::with_capacity(3 * n + m + 1);
        match formulation {
            Formulation::Pontryagin => {
                let r = pontryagin_dirac_residual(l, sys.constraints, sys.force, &mid, &rate, &lam)?;
                out.extend((0..n).map(|i| r[i] * wk[i]));
                out.extend((0..n).map(|i| r[n + i] * wm[i]));
                out.extend((0..n).map(|i| r[2 * n + i] * wm[i]));
                out.extend(r.rows(3 * n, m).iter());
                if !post {
                    out.push(r[3 * n + m]);
                }
            }
            _ => {
                // The energy constraint row is a consequence of the others and
                // is monitored, not imposed.
                let r = lagrange_dirac_residual(l, sys.constraints, sys.force, &mid, &rate, &lam)?;
                out.extend((0..n).map(|i| r[i] * wk[i]));
                if !post {
                    out.push(r[n]);
                }
                out.extend((0..n).map(|i| r[n + 1 + i] * wm[i]));
                out.extend(r.rows(2 * n + 1, m).iter());
                out.extend((0..n).map(|i| r[2 * n + 1 + m + i] * wm[i]));
            }
        }
        Ok(DVector::from_vec(out))
    };
    let mut u0 = Vec::with_capacity(3 * n + 1 + m);
    u0.extend((&node.x + &node.v * h).iter());
    u0.extend(node.v.iter());
    u0.extend(node.p.iter());
    if !post {
        u0.push(node.p_t);
    }
    u0.extend(lam0.iter());
    let (u, iterations) = newton(residual, DVector::from_vec(u0), opts.newton).map_err(|f| map_failure(step, f))?;
    let (x1, v, p1, mut p_t1, lam) = unpack(&u);
    if post {
        let (mid, _) = stage_point(node, h, &x1, v.clone(), &p1, node.p_t);
        let b = match formulation {
            Formulation::Pontryagin => sys.constraints.coefficients(mid.t, &mid.x, &mid.v)?.b,
            _ => super::momentum_coefficients(l, sys.constraints, mid.t, &mid.x, &mid.p, &mid.v)?.b,
        };
        p_t1 = node.p_t + h * (l.d_t(mid.t, &mid.x, &mid.v) + b.dot(&lam));
    }
    let (mid, rate) = stage_point(node, h, &x1, v, &p1, p_t1);
    let t1 = node.t + h;
    let v1 = match sys.node_velocity {
        Some(nv) => nv.node_velocity(t1, &x1, &p1, &mid.v)?,
        None => legendre_invert(l, t1, &x1, &p1, &mid.v)?,
    };
    let next = PontryaginState { t: t1, x: x1, v: v1, p_t: p_t1, p: p1 };
    Ok(StepResult { node: next, stage: Stage { state: mid, rate, lambda: lam, iterations } })
}

fn hamiltonian_step(
    sys: &DiracSystem<'_>,
    node: &PontryaginState,
    h: f64,
    opts: &StepOptions,
    step: usize,
    lam0: DVector<f64>,
) -> Result<StepResult> {
    let ham = sys
        .hamiltonian
        .ok_or_else(|| DiracError::Inadmissible("the Hamilton-Dirac formulation needs a Hamiltonian for this system".into()))?;
    let n = sys.dim();
    let m = sys.constraints.count();
    let post = opts.post_integrate_p_t;
    let with_pt = usize::from(!post);
    let (wk, wm) = weights(opts, n)?;
    let on_momenta = MomentumConstraints { lagrangian: sys.lagrangian, constraints: sys.constraints };
    let unpack = |u: &DVector<f64>| {
        let x1 = u.rows(0, n).into_owned();
        let p1 = u.rows(n, n).into_owned();
        let p_t1 = if post { node.p_t } else { u[2 * n] };
        let lam = u.rows(2 * n + with_pt, m).into_owned();
        (x1, p1, p_t1, lam)
    };
    let cotangent_mid = |x1: &DVector<f64>, p1: &DVector<f64>, p_t1: f64| CotangentPoint {
        t: node.t + 0.5 * h,
        x: (&node.x + x1) * 0.5,
        p_t: 0.5 * (node.p_t + p_t1),
        p: (&node.p + p1) * 0.5,
    };
    let residual = |u: &DVector<f64>| -> Result<DVector<f64>> {
        let (x1, p1, p_t1, lam) = unpack(u);
        let z = cotangent_mid(&x1, &p1, p_t1);
        let (_, rate) = stage_point(node, h, &x1, DVector::zeros(0), &p1, p_t1);
        let r = hamilton_dirac_residual(ham, &on_momenta, sys.force, &z, &rate, &lam)?;
        let mut out = Vec::with_capacity(2 * n + m + 1);
        out.extend((0..n).map(|i| r[i] * wk[i]));
        if !post {
            out.push(r[n]);
        }
        out.extend((0..n).map(|i| r[n + 1 + i] * wm[i]));
        out.extend(r.rows(2 * n + 1, m).iter());
        Ok(DVector::from_vec(out))
    };
    let mut u0 = Vec::with_capacity(2 * n + 1 + m);
    u0.extend((&node.x + &node.v * h).iter());
    u0.extend(node.p.iter());
    if !post {
        u0.push(node.p_t);
    }
    u0.extend(lam0.iter());
    let (u, iterations) = newton(residual, DVector::from_vec(u0), opts.newton).map_err(|f| map_failure(step, f))?;
    let (x1, p1, mut p_t1, lam) = unpack(&u);
    if post {
        let z = cotangent_mid(&x1, &p1, node.p_t);
        let b = on_momenta.coefficients(z.t, &z.x, &z.p)?.b;
        p_t1 = node.p_t + h * (-ham.d_t(z.t, &z.x, &z.p) + b.dot(&lam));
    }
    let z = cotangent_mid(&x1, &p1, p_t1);
    let v_mid = ham.d_p(z.t, &z.x, &z.p);
    let (mid, rate) = stage_point(node, h, &x1, v_mid, &p1, p_t1);
    let t1 = node.t + h;
    let v1 = ham.d_p(t1, &x1, &p1);
    let next = PontryaginState { t: t1, x: x1, v: v1, p_t: p_t1, p: p1 };
    Ok(StepResult { node: next, stage: Stage { state: mid, rate, lambda: lam, iterations } })
}

/// Runs `steps` fixed steps of size `h` from `init`.
pub fn integrate(
    sys: &DiracSystem<'_>,
    formulation: Formulation,
    init: PontryaginState,
    h: f64,
    steps: usize,
    opts: &StepOptions,
) -> Result<Trajectory> {
    let mut nodes = Vec::with_capacity(steps + 1);
    let mut stages = Vec::with_capacity(steps);
    let t0 = init.t;
    nodes.push(init);
    let mut lambda: Option<DVector<f64>> = None;
    for k in 0..steps {
        let current = nodes.last().expect("at least the initial node");
        let mut res = solve_step(sys, formulation, current, h, opts, k, lambda.as_ref())?;
        // Keep node times on the uniform grid.
        res.node.t = t0 + (k + 1) as f64 * h;
        lambda = Some(res.stage.lambda.clone());
        nodes.push(res.node);
        stages.push(res.stage);
    }
    Ok(Trajectory { h, nodes, stages })
}
