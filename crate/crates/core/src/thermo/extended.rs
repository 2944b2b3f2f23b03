//! The open system seen as a nonholonomic Dirac system on the extended
//! configuration space, so the generic integrator and monitor apply.

use nalgebra::{DMatrix, DVector};

use super::{reduced_rhs, SimpleOpenSystem, ThermoLayout, ThermoState};
use crate::dynamics::{DiracSystem, EntropyAccounting, NodeVelocity, Stage};
use crate::error::{check_len, Result};
use crate::geometry::{ConstraintCoefficients, ConstraintSet, PontryaginState};
use crate::lagrangian::{legendre_invert, ExternalForce, Lagrangian};

/// `L(x, v) = L_mech(q, v_q, S, N) + v_W N + v_Gamma (S - Sigma)`.
#[derive(Clone, Copy)]
pub struct ExtendedLagrangian<'a> {
    pub system: &'a SimpleOpenSystem,
}

impl ExtendedLagrangian<'_> {
    fn split(&self, x: &DVector<f64>, v: &DVector<f64>) -> (ThermoLayout, DVector<f64>, DVector<f64>, f64, f64) {
        let lay = self.system.layout();
        let q = x.rows(0, lay.n_q).into_owned();
        let vq = v.rows(0, lay.n_q).into_owned();
        (lay, q, vq, x[lay.entropy()], x[lay.moles()])
    }
}

impl Lagrangian for ExtendedLagrangian<'_> {
    fn dim(&self) -> usize {
        self.system.layout().dim()
    }

    fn value(&self, _t: f64, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let (lay, q, vq, s, n) = self.split(x, v);
        self.system.mechanics.value(&q, &vq, s, n) + v[lay.matter()] * n + v[lay.thermal()] * (s - x[lay.produced()])
    }

    fn d_t(&self, _t: f64, _x: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        0.0
    }

    fn d_x(&self, _t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let (lay, q, vq, s, n) = self.split(x, v);
        let m = &self.system.mechanics;
        let mut out = DVector::zeros(lay.dim());
        out.rows_mut(0, lay.n_q).copy_from(&m.d_q(&q, &vq, s, n));
        out[lay.entropy()] = m.d_s(&q, &vq, s, n) + v[lay.thermal()];
        out[lay.moles()] = m.d_n(&q, &vq, s, n) + v[lay.matter()];
        out[lay.produced()] = -v[lay.thermal()];
        out
    }

    fn d_v(&self, _t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let (lay, q, vq, s, n) = self.split(x, v);
        let mut out = DVector::zeros(lay.dim());
        out.rows_mut(0, lay.n_q).copy_from(&self.system.mechanics.d_v(&q, &vq, s, n));
        out[lay.thermal()] = s - x[lay.produced()];
        out[lay.matter()] = n;
        out
    }

    fn d_vv(&self, _t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let (lay, q, vq, s, n) = self.split(x, v);
        let mut out = DMatrix::zeros(lay.dim(), lay.dim());
        out.view_mut((0, 0), (lay.n_q, lay.n_q)).copy_from(&self.system.mechanics.d_vv(&q, &vq, s, n));
        out
    }

    fn regular_block(&self) -> Vec<usize> {
        (0..self.system.layout().n_q).collect()
    }
}

/// The single thermodynamic constraint `A xdot + B = 0` with
/// `A = (F_fr, 0, 0, sum J_S, sum J, T)` and `B = -(P_H + P_M)`.
#[derive(Clone, Copy)]
pub struct ThermoConstraints<'a> {
    pub system: &'a SimpleOpenSystem,
}

impl ConstraintSet for ThermoConstraints<'_> {
    fn dim(&self) -> usize {
        self.system.layout().dim()
    }

    fn count(&self) -> usize {
        1
    }

    fn coefficients(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> Result<ConstraintCoefficients> {
        let lay = self.system.layout();
        check_len("extended configuration", lay.dim(), x.len())?;
        let ex = self.system.exchange(t, &lay.point(x, y))?;
        let mut a = DMatrix::zeros(1, lay.dim());
        for i in 0..lay.n_q {
            a[(0, i)] = ex.friction[i];
        }
        a[(0, lay.thermal())] = ex.entropy_inflow();
        a[(0, lay.matter())] = ex.molar_inflow();
        a[(0, lay.produced())] = ex.temperature;
        Ok(ConstraintCoefficients { a, b: DVector::from_element(1, ex.constraint_offset()) })
    }
}

/// The external mechanical force on `q`, zero on the thermodynamic slots.
#[derive(Clone, Copy)]
pub struct ThermoForce<'a> {
    pub system: &'a SimpleOpenSystem,
}

impl ExternalForce for ThermoForce<'_> {
    fn dim(&self) -> usize {
        self.system.layout().dim()
    }

    fn force(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let lay = self.system.layout();
        let mut out = DVector::zeros(lay.dim());
        if let Some(f) = &self.system.external_force {
            out.rows_mut(0, lay.n_q).copy_from(&f(t, &lay.point(x, v)));
        }
        out
    }
}

/// Node velocities from the momentum relations: `v_q` by Legendre inversion,
/// the thermodynamic rates from the reduced equations.
#[derive(Clone, Copy)]
pub struct ThermoNodeVelocity<'a> {
    pub system: &'a SimpleOpenSystem,
}

impl NodeVelocity for ThermoNodeVelocity<'_> {
    fn node_velocity(&self, t: f64, x: &DVector<f64>, p: &DVector<f64>, v_stage: &DVector<f64>) -> Result<DVector<f64>> {
        let lay = self.system.layout();
        let lag = ExtendedLagrangian { system: self.system };
        let v = legendre_invert(&lag, t, x, p, v_stage)?;
        let state = ThermoState::from_extended(t, lay, x, &v, 0.0);
        let rates = reduced_rhs(self.system, &state)?;
        Ok(rates.extended_velocity(&state))
    }
}

/// Entropy balance over a step: `dS - dSigma - dp_Gamma` from node
/// differences, and the internal production at the stage.
#[derive(Clone, Copy)]
pub struct ThermoEntropy<'a> {
    pub system: &'a SimpleOpenSystem,
}

impl EntropyAccounting for ThermoEntropy<'_> {
    fn entropy_terms(&self, prev: &PontryaginState, next: &PontryaginState, stage: &Stage, h: f64) -> Result<(f64, f64)> {
        let lay = self.system.layout();
        let d = |s: &PontryaginState| s.x[lay.entropy()] - s.x[lay.produced()] - s.p[lay.thermal()];
        let decomposition = ((d(next) - d(prev)) / h).abs();
        let st = &stage.state;
        let production = self.system.entropy_production(st.t, &lay.point(&st.x, &st.v))?.total;
        Ok((decomposition, production))
    }
}

/// Everything needed to hand the open system to the generic integrator.
#[derive(Clone, Copy)]
pub struct ThermoDirac<'a> {
    pub lagrangian: ExtendedLagrangian<'a>,
    pub constraints: ThermoConstraints<'a>,
    pub force: ThermoForce<'a>,
    pub node_velocity: ThermoNodeVelocity<'a>,
    pub entropy: ThermoEntropy<'a>,
}

impl<'a> ThermoDirac<'a> {
    pub fn new(system: &'a SimpleOpenSystem) -> Self {
        Self {
            lagrangian: ExtendedLagrangian { system },
            constraints: ThermoConstraints { system },
            force: ThermoForce { system },
            node_velocity: ThermoNodeVelocity { system },
            entropy: ThermoEntropy { system },
        }
    }

    pub fn dirac_system(&self) -> DiracSystem<'_> {
        DiracSystem::new(&self.lagrangian, &self.constraints).with_force(&self.force).with_node_velocity(&self.node_velocity)
    }
}

pub fn build_extended_lagrangian(system: &SimpleOpenSystem) -> ExtendedLagrangian<'_> {
    ExtendedLagrangian { system }
}

pub fn build_constraints(system: &SimpleOpenSystem) -> ThermoConstraints<'_> {
    ThermoConstraints { system }
}
