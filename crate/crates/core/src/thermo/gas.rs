use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{constant, EntropyFlow, HeatSourceModel, MechanicalLagrangian, PortModel, SimpleOpenSystem, SystemPoint, ThermoState};
use crate::error::{DiracError, Result};

/// A mass on a linear spring coupled to an ideal gas:
/// `L = m|v|^2/2 - k|q|^2/2 - U(S, N)` with
/// `U = c N T0 exp((S - N s0) / (c N))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealGas {
    pub n_q: usize,
    pub mass: f64,
    pub stiffness: f64,
    /// Molar heat capacity at constant volume.
    pub heat_capacity: f64,
    /// Reference temperature.
    pub t0: f64,
    /// Reference molar entropy.
    pub s0: f64,
}

impl IdealGas {
    fn theta(&self, s: f64, n: f64) -> f64 {
        (s - n * self.s0) / (self.heat_capacity * n)
    }

    pub fn internal_energy(&self, s: f64, n: f64) -> f64 {
        self.heat_capacity * n * self.t0 * self.theta(s, n).exp()
    }

    pub fn temperature(&self, s: f64, n: f64) -> f64 {
        self.t0 * self.theta(s, n).exp()
    }

    /// `T (c - S/N)`.
    pub fn chemical_potential(&self, s: f64, n: f64) -> f64 {
        self.temperature(s, n) * (self.heat_capacity - s / n)
    }

    /// Entropy that gives temperature `t` at `n` moles.
    pub fn entropy_at(&self, t: f64, n: f64) -> f64 {
        n * self.s0 + self.heat_capacity * n * (t / self.t0).ln()
    }
}

/// Validated [`IdealGas`].
pub fn ideal_gas_fixture(n_q: usize, mass: f64, stiffness: f64, heat_capacity: f64, t0: f64, s0: f64) -> Result<Arc<IdealGas>> {
    let bad = |what: &str, v: f64| DiracError::InvalidParameter(format!("{what} = {v} must be positive"));
    if !(mass > 0.0) {
        return Err(bad("mass", mass));
    }
    if !(heat_capacity > 0.0) {
        return Err(bad("heat capacity", heat_capacity));
    }
    if !(t0 > 0.0) {
        return Err(bad("reference temperature", t0));
    }
    if !(stiffness >= 0.0) || !s0.is_finite() {
        return Err(DiracError::InvalidParameter(format!(
            "stiffness {stiffness} and reference entropy {s0} must be finite, stiffness nonnegative"
        )));
    }
    Ok(Arc::new(IdealGas { n_q, mass, stiffness, heat_capacity, t0, s0 }))
}

impl MechanicalLagrangian for IdealGas {
    fn n_q(&self) -> usize {
        self.n_q
    }

    fn value(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> f64 {
        0.5 * self.mass * v.norm_squared() - 0.5 * self.stiffness * q.norm_squared() - self.internal_energy(s, n)
    }

    fn d_q(&self, q: &DVector<f64>, _v: &DVector<f64>, _s: f64, _n: f64) -> DVector<f64> {
        q * -self.stiffness
    }

    fn d_v(&self, _q: &DVector<f64>, v: &DVector<f64>, _s: f64, _n: f64) -> DVector<f64> {
        v * self.mass
    }

    fn d_s(&self, _q: &DVector<f64>, _v: &DVector<f64>, s: f64, n: f64) -> f64 {
        -self.temperature(s, n)
    }

    fn d_n(&self, _q: &DVector<f64>, _v: &DVector<f64>, s: f64, n: f64) -> f64 {
        -self.chemical_potential(s, n)
    }

    fn admissible(&self, _q: &DVector<f64>, _v: &DVector<f64>, s: f64, n: f64) -> Result<()> {
        if n > 0.0 && s.is_finite() {
            Ok(())
        } else {
            Err(DiracError::Inadmissible(format!("ideal gas needs positive moles, got N = {n}")))
        }
    }

    fn d_vv(&self, _q: &DVector<f64>, _v: &DVector<f64>, _s: f64, _n: f64) -> DMatrix<f64> {
        DMatrix::identity(self.n_q, self.n_q) * self.mass
    }

    fn d_vq(&self, _q: &DVector<f64>, _v: &DVector<f64>, _s: f64, _n: f64) -> DMatrix<f64> {
        DMatrix::zeros(self.n_q, self.n_q)
    }

    fn d_vs(&self, _q: &DVector<f64>, _v: &DVector<f64>, _s: f64, _n: f64) -> DVector<f64> {
        DVector::zeros(self.n_q)
    }

    fn d_vn(&self, _q: &DVector<f64>, _v: &DVector<f64>, _s: f64, _n: f64) -> DVector<f64> {
        DVector::zeros(self.n_q)
    }
}

/// A gas-filled piston with an inlet, an outlet, a conducting wall and
/// linear friction on the piston.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PistonConfig {
    pub gas: IdealGas,
    pub friction: f64,
    /// Molar inflow at the inlet.
    pub inlet_flow: f64,
    pub inlet_temperature: f64,
    pub inlet_molar_entropy: f64,
    /// Molar outflow at the outlet, which carries the system's own state.
    pub outlet_flow: f64,
    pub conductance: f64,
    pub wall_temperature: f64,
}

impl Default for PistonConfig {
    fn default() -> Self {
        Self {
            gas: IdealGas { n_q: 2, mass: 1.0, stiffness: 4.0, heat_capacity: 12.47, t0: 300.0, s0: 10.0 },
            friction: 0.1,
            inlet_flow: 1e-3,
            inlet_temperature: 350.0,
            inlet_molar_entropy: 11.0,
            outlet_flow: 5e-4,
            conductance: 0.05,
            wall_temperature: 320.0,
        }
    }
}

impl PistonConfig {
    pub fn system(&self) -> Result<SimpleOpenSystem> {
        let g = self.gas;
        let gas = ideal_gas_fixture(g.n_q, g.mass, g.stiffness, g.heat_capacity, g.t0, g.s0)?;
        let mut sys = SimpleOpenSystem::new(gas).with_linear_friction(self.friction);
        if self.inlet_flow != 0.0 {
            // Chemical potential of the same ideal gas at the inlet state.
            let mu_in = self.inlet_temperature * (g.heat_capacity - self.inlet_molar_entropy);
            sys = sys.with_port(PortModel::new(
                constant(self.inlet_flow),
                EntropyFlow::MolarEntropy(constant(self.inlet_molar_entropy)),
                constant(mu_in),
                constant(self.inlet_temperature),
            ));
        }
        if self.outlet_flow != 0.0 {
            sys = sys.with_port(PortModel::matched(
                constant(-self.outlet_flow),
                EntropyFlow::MolarEntropy(Arc::new(|_, p: &SystemPoint| p.s / p.n)),
            ));
        }
        if self.conductance != 0.0 {
            sys = sys.with_source(HeatSourceModel::conduction(self.conductance, constant(self.wall_temperature)));
        }
        Ok(sys)
    }

    /// Initial state at temperature `temperature` with `moles` of gas.
    pub fn initial_state(&self, sys: &SimpleOpenSystem, q: DVector<f64>, v_q: DVector<f64>, temperature: f64, moles: f64) -> ThermoState {
        let s = self.gas.entropy_at(temperature, moles);
        ThermoState::at_rest_displacements(sys, 0.0, q, v_q, s, moles)
    }
}
