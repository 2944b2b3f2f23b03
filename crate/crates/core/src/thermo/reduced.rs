//! Reduced evolution equations of the open system, an implicit midpoint
//! integrator for them and the lift back to the Pontryagin bundle.

use nalgebra::DVector;

use super::{EntropyProduction, PowerFlows, SimpleOpenSystem, SystemPoint, ThermoDirac, ThermoLayout};
use crate::dynamics::{map_failure, recover_multipliers, SectionRate, Stage, Trajectory};
use crate::error::{check_len, DiracError, Result};
use crate::geometry::PontryaginState;
use crate::linalg::{newton, NewtonOptions};

/// State of the reduced equations. `p_t` is the covariant time momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoState {
    pub t: f64,
    pub q: DVector<f64>,
    pub v_q: DVector<f64>,
    pub s: f64,
    pub n: f64,
    pub gamma: f64,
    pub w: f64,
    pub sigma: f64,
    pub p_t: f64,
}

impl ThermoState {
    /// State with zero displacements and `p_t = -E(0)`.
    pub fn at_rest_displacements(system: &SimpleOpenSystem, t: f64, q: DVector<f64>, v_q: DVector<f64>, s: f64, n: f64) -> Self {
        let p_t = -system.mechanics.energy(&q, &v_q, s, n);
        Self { t, q, v_q, s, n, gamma: 0.0, w: 0.0, sigma: 0.0, p_t }
    }

    pub fn n_q(&self) -> usize {
        self.q.len()
    }

    pub fn point(&self) -> SystemPoint {
        SystemPoint { q: self.q.clone(), v_q: self.v_q.clone(), s: self.s, n: self.n }
    }

    /// Reads `(q, S, N, Gamma, W, Sigma)` from `x` and `v_q` from `v`.
    pub fn from_extended(t: f64, lay: ThermoLayout, x: &DVector<f64>, v: &DVector<f64>, p_t: f64) -> Self {
        Self {
            t,
            q: x.rows(0, lay.n_q).into_owned(),
            v_q: v.rows(0, lay.n_q).into_owned(),
            s: x[lay.entropy()],
            n: x[lay.moles()],
            gamma: x[lay.thermal()],
            w: x[lay.matter()],
            sigma: x[lay.produced()],
            p_t,
        }
    }

    /// `(q, S, N, Gamma, W, Sigma)`.
    pub fn configuration(&self) -> DVector<f64> {
        let k = self.n_q();
        let mut x = DVector::zeros(k + 5);
        x.rows_mut(0, k).copy_from(&self.q);
        x[k] = self.s;
        x[k + 1] = self.n;
        x[k + 2] = self.gamma;
        x[k + 3] = self.w;
        x[k + 4] = self.sigma;
        x
    }

    /// `(q, v_q, S, N, Gamma, W, Sigma, p_t)`.
    pub fn to_vec(&self) -> DVector<f64> {
        let k = self.n_q();
        let mut y = DVector::zeros(2 * k + 6);
        y.rows_mut(0, k).copy_from(&self.q);
        y.rows_mut(k, k).copy_from(&self.v_q);
        for (i, val) in [self.s, self.n, self.gamma, self.w, self.sigma, self.p_t].into_iter().enumerate() {
            y[2 * k + i] = val;
        }
        y
    }

    pub fn from_vec(t: f64, n_q: usize, y: &DVector<f64>) -> Result<Self> {
        check_len("reduced state", 2 * n_q + 6, y.len())?;
        let o = 2 * n_q;
        Ok(Self {
            t,
            q: y.rows(0, n_q).into_owned(),
            v_q: y.rows(n_q, n_q).into_owned(),
            s: y[o],
            n: y[o + 1],
            gamma: y[o + 2],
            w: y[o + 3],
            sigma: y[o + 4],
            p_t: y[o + 5],
        })
    }
}

/// Time derivatives of every reduced variable, with the momentum rates and
/// the entropy and power bookkeeping evaluated at the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedRates {
    pub q_dot: DVector<f64>,
    pub v_q_dot: DVector<f64>,
    pub s_dot: f64,
    pub n_dot: f64,
    pub gamma_dot: f64,
    pub w_dot: f64,
    pub sigma_dot: f64,
    pub p_gamma_dot: f64,
    pub p_w_dot: f64,
    pub p_t_dot: f64,
    pub production: EntropyProduction,
    pub power: PowerFlows,
}

impl ReducedRates {
    /// Derivative of [`ThermoState::to_vec`].
    pub fn to_vec(&self) -> DVector<f64> {
        let k = self.q_dot.len();
        let mut d = DVector::zeros(2 * k + 6);
        d.rows_mut(0, k).copy_from(&self.q_dot);
        d.rows_mut(k, k).copy_from(&self.v_q_dot);
        for (i, val) in [self.s_dot, self.n_dot, self.gamma_dot, self.w_dot, self.sigma_dot, self.p_t_dot].into_iter().enumerate() {
            d[2 * k + i] = val;
        }
        d
    }

    /// `(v_q, Sdot, Ndot, Gammadot, Wdot, Sigmadot)` for the extended
    /// configuration, with `v_q` taken from `state`.
    pub fn extended_velocity(&self, state: &ThermoState) -> DVector<f64> {
        let k = state.n_q();
        let mut v = DVector::zeros(k + 5);
        v.rows_mut(0, k).copy_from(&state.v_q);
        v[k] = self.s_dot;
        v[k + 1] = self.n_dot;
        v[k + 2] = self.gamma_dot;
        v[k + 3] = self.w_dot;
        v[k + 4] = self.sigma_dot;
        v
    }
}

/// Right-hand side of the reduced equations.
///
/// The entropy rate comes from the energy constraint divided by `dL/dS`,
/// `Sigmadot` from the same constraint with the displacement rates
/// substituted, and `v_q` from the mass-matrix solve of the forced
/// Euler-Lagrange equation.
pub fn reduced_rhs(system: &SimpleOpenSystem, state: &ThermoState) -> Result<ReducedRates> {
    let mech = &system.mechanics;
    let k = mech.n_q();
    check_len("reduced position", k, state.q.len())?;
    check_len("reduced velocity", k, state.v_q.len())?;
    let p = state.point();
    let t = state.t;
    let ex = system.exchange(t, &p)?;
    let (q, v, s, n) = (&state.q, &state.v_q, state.s, state.n);
    let l_s = mech.d_s(q, v, s, n);
    let l_n = mech.d_n(q, v, s, n);
    let friction_power = ex.friction.dot(v);

    let n_dot = ex.molar_inflow();
    let port_terms: f64 =
        ex.ports.iter().map(|pf| pf.molar_flow * (l_n + pf.chemical_potential) + pf.entropy_flow * (l_s + pf.temperature)).sum();
    let source_terms: f64 = ex.sources.iter().map(|sf| sf.entropy_flow * (l_s + sf.temperature)).sum();
    let s_dot = ex.entropy_inflow() + (friction_power - port_terms - source_terms) / l_s;

    let (gamma_dot, w_dot) = (ex.temperature, ex.chemical_potential);
    let displaced: f64 = ex
        .ports
        .iter()
        .map(|pf| pf.molar_flow * (w_dot - pf.chemical_potential) + pf.entropy_flow * (gamma_dot - pf.temperature))
        .sum::<f64>()
        + ex.sources.iter().map(|sf| sf.entropy_flow * (gamma_dot - sf.temperature)).sum::<f64>();
    let sigma_dot = (friction_power + displaced) / l_s;

    let mass = mech.d_vv(q, v, s, n);
    let rhs = mech.d_q(q, v, s, n) + &ex.friction + &ex.external_force
        - mech.d_vq(q, v, s, n) * v
        - mech.d_vs(q, v, s, n) * s_dot
        - mech.d_vn(q, v, s, n) * n_dot;
    let v_q_dot = mass.lu().solve(&rhs).ok_or(DiracError::NotHyperregular)?;
    if v_q_dot.iter().any(|z| !z.is_finite()) {
        return Err(DiracError::NotHyperregular);
    }

    let power = ex.power_flows(v);
    Ok(ReducedRates {
        q_dot: v.clone(),
        v_q_dot,
        s_dot,
        n_dot,
        gamma_dot,
        w_dot,
        sigma_dot,
        p_gamma_dot: ex.entropy_inflow(),
        p_w_dot: n_dot,
        p_t_dot: ex.constraint_offset(),
        production: ex.entropy_production(v),
        power,
    })
}

/// Nodes of a reduced trajectory on the grid `t0 + k h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub h: f64,
    pub nodes: Vec<ThermoState>,
}

/// Implicit midpoint steps of the reduced equations.
pub fn integrate_reduced(
    system: &SimpleOpenSystem,
    init: ThermoState,
    h: f64,
    steps: usize,
    opts: NewtonOptions,
) -> Result<ReducedTrajectory> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DiracError::InvalidParameter(format!("step h = {h} must be positive")));
    }
    let k = system.mechanics.n_q();
    check_len("initial position", k, init.q.len())?;
    check_len("initial velocity", k, init.v_q.len())?;
    let t0 = init.t;
    let mut nodes = Vec::with_capacity(steps + 1);
    nodes.push(init);
    for step in 0..steps {
        let cur = nodes.last().expect("initial node");
        let y0 = cur.to_vec();
        let t_mid = cur.t + 0.5 * h;
        let f0 = reduced_rhs(system, cur)?.to_vec();
        let residual = |y1: &DVector<f64>| -> Result<DVector<f64>> {
            let mid = ThermoState::from_vec(t_mid, k, &((&y0 + y1) * 0.5))?;
            Ok((y1 - &y0) / h - reduced_rhs(system, &mid)?.to_vec())
        };
        let (y1, _) = newton(residual, &y0 + &f0 * h, opts).map_err(|f| map_failure(step, f))?;
        let next = ThermoState::from_vec(t0 + (step + 1) as f64 * h, k, &y1)?;
        nodes.push(next);
    }
    Ok(ReducedTrajectory { h, nodes })
}

/// The Pontryagin-bundle point over a reduced state: velocities from the
/// reduced equations and momenta from the momentum relations
/// `p_q = dL/dv_q`, `p_S = p_N = p_Sigma = 0`, `p_Gamma = S - Sigma`, `p_W = N`.
pub fn lift_node(system: &SimpleOpenSystem, state: &ThermoState) -> Result<PontryaginState> {
    let rates = reduced_rhs(system, state)?;
    Ok(lift_with(system, state, rates.extended_velocity(state)))
}

fn lift_with(system: &SimpleOpenSystem, state: &ThermoState, v: DVector<f64>) -> PontryaginState {
    let lay = system.layout();
    let mut p = DVector::zeros(lay.dim());
    p.rows_mut(0, lay.n_q).copy_from(&system.mechanics.d_v(&state.q, &state.v_q, state.s, state.n));
    p[lay.thermal()] = state.s - state.sigma;
    p[lay.matter()] = state.n;
    PontryaginState { t: state.t, x: state.configuration(), v, p_t: state.p_t, p }
}

/// Lifts a reduced trajectory to nodes and midpoint stages on the Pontryagin
/// bundle. Stage multipliers are recovered by least squares.
pub fn lift_reduced(system: &SimpleOpenSystem, traj: &ReducedTrajectory) -> Result<Trajectory> {
    let h = traj.h;
    let parts = ThermoDirac::new(system);
    let nodes = traj.nodes.iter().map(|s| lift_node(system, s)).collect::<Result<Vec<_>>>()?;
    let k = system.mechanics.n_q();
    let mut stages = Vec::with_capacity(nodes.len().saturating_sub(1));
    for (i, pair) in traj.nodes.windows(2).enumerate() {
        let mid_y = (pair[0].to_vec() + pair[1].to_vec()) * 0.5;
        let mid = ThermoState::from_vec(pair[0].t + 0.5 * h, k, &mid_y)?;
        let rates = reduced_rhs(system, &mid)?;
        let (a, b) = (&nodes[i], &nodes[i + 1]);
        let state = PontryaginState {
            t: mid.t,
            x: (&a.x + &b.x) * 0.5,
            v: rates.extended_velocity(&mid),
            p_t: 0.5 * (a.p_t + b.p_t),
            p: (&a.p + &b.p) * 0.5,
        };
        let rate = SectionRate::between(a, b, h);
        let fit = recover_multipliers(&parts.lagrangian, &parts.constraints, Some(&parts.force), &state, &rate)?;
        stages.push(Stage { state, rate, lambda: fit.lambda, iterations: 0 });
    }
    Ok(Trajectory { h, nodes, stages })
}
