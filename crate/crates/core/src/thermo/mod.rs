//! Simple open thermodynamic systems: a mechanical Lagrangian coupled to one
//! entropy and one mole number, with matter ports, heat sources and friction.
//!
//! The extended configuration is `x = (q, S, N, Gamma, W, Sigma)` where
//! `Gamma` and `W` are the thermal and matter displacements and `Sigma`
//! accumulates internally produced entropy.

mod extended;
mod gas;
mod reduced;

pub use extended::{
    build_constraints, build_extended_lagrangian, ExtendedLagrangian, ThermoConstraints, ThermoDirac, ThermoEntropy, ThermoForce,
    ThermoNodeVelocity,
};
pub use gas::{ideal_gas_fixture, IdealGas, PistonConfig};
pub use reduced::{integrate_reduced, lift_node, lift_reduced, reduced_rhs, ReducedRates, ReducedTrajectory, ThermoState};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{DiracError, Result};

/// Mechanical Lagrangian `L(q, v, S, N)`. `-dL/dS` is the temperature and
/// `-dL/dN` the chemical potential.
pub trait MechanicalLagrangian: Send + Sync {
    fn n_q(&self) -> usize;
    fn value(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> f64;
    fn d_q(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> DVector<f64>;
    fn d_v(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> DVector<f64>;
    fn d_s(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> f64;
    fn d_n(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> f64;
    fn d_vv(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> DMatrix<f64>;

    /// `d(dL/dv_i)/dq_j`. Defaults to central differences of [`Self::d_v`].
    fn d_vq(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> DMatrix<f64> {
        let k = self.n_q();
        let mut out = DMatrix::zeros(k, k);
        for j in 0..k {
            let h = 1e-6 * (1.0 + q[j].abs());
            let mut qp = q.clone();
            qp[j] += h;
            let mut qm = q.clone();
            qm[j] -= h;
            out.set_column(j, &((self.d_v(&qp, v, s, n) - self.d_v(&qm, v, s, n)) / (2.0 * h)));
        }
        out
    }

    /// `d(dL/dv)/dS`. Defaults to central differences.
    fn d_vs(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> DVector<f64> {
        let h = 1e-6 * (1.0 + s.abs());
        (self.d_v(q, v, s + h, n) - self.d_v(q, v, s - h, n)) / (2.0 * h)
    }

    /// `d(dL/dv)/dN`. Defaults to central differences.
    fn d_vn(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> DVector<f64> {
        let h = 1e-6 * (1.0 + n.abs());
        (self.d_v(q, v, s, n + h) - self.d_v(q, v, s, n - h)) / (2.0 * h)
    }

    /// Domain check beyond positive temperature. Defaults to accepting every point.
    fn admissible(&self, _q: &DVector<f64>, _v: &DVector<f64>, _s: f64, _n: f64) -> Result<()> {
        Ok(())
    }

    /// `<dL/dv, v> - L`.
    fn energy(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> f64 {
        self.d_v(q, v, s, n).dot(v) - self.value(q, v, s, n)
    }
}

/// The variables port and source laws may depend on (besides time).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemPoint {
    pub q: DVector<f64>,
    pub v_q: DVector<f64>,
    pub s: f64,
    pub n: f64,
}

pub type ScalarLaw = Arc<dyn Fn(f64, &SystemPoint) -> f64 + Send + Sync>;
pub type VectorLaw = Arc<dyn Fn(f64, &SystemPoint) -> DVector<f64> + Send + Sync>;

/// A law that ignores the state.
pub fn constant(c: f64) -> ScalarLaw {
    Arc::new(move |_, _| c)
}

/// A law depending on time only.
pub fn of_time<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> ScalarLaw {
    Arc::new(move |t, _| f(t))
}

/// Temperature or chemical potential at a port.
#[derive(Clone)]
pub enum Intensive {
    Prescribed(ScalarLaw),
    /// Equal to the system's own value.
    System,
}

/// How a port's entropy flow is given.
#[derive(Clone)]
pub enum EntropyFlow {
    Direct(ScalarLaw),
    /// Molar entropy `s_a`, with entropy flow `s_a * J`.
    MolarEntropy(ScalarLaw),
}

/// A matter port: molar flow `J` (positive into the system), entropy flow,
/// chemical potential and temperature at the port.
#[derive(Clone)]
pub struct PortModel {
    pub molar_flow: ScalarLaw,
    pub entropy_flow: EntropyFlow,
    pub chemical_potential: Intensive,
    pub temperature: Intensive,
}

impl PortModel {
    pub fn new(molar_flow: ScalarLaw, entropy_flow: EntropyFlow, chemical_potential: ScalarLaw, temperature: ScalarLaw) -> Self {
        Self {
            molar_flow,
            entropy_flow,
            chemical_potential: Intensive::Prescribed(chemical_potential),
            temperature: Intensive::Prescribed(temperature),
        }
    }

    /// A port whose chemical potential and temperature track the system's.
    pub fn matched(molar_flow: ScalarLaw, entropy_flow: EntropyFlow) -> Self {
        Self { molar_flow, entropy_flow, chemical_potential: Intensive::System, temperature: Intensive::System }
    }
}

/// Entropy flow law of a heat source.
#[derive(Clone)]
pub enum HeatFlow {
    Direct(ScalarLaw),
    /// `kappa (T_b - T) / T` with conductance `kappa`.
    Conduction {
        conductance: f64,
    },
}

/// A heat source at temperature `T_b`.
#[derive(Clone)]
pub struct HeatSourceModel {
    pub entropy_flow: HeatFlow,
    pub temperature: ScalarLaw,
}

impl HeatSourceModel {
    pub fn conduction(conductance: f64, temperature: ScalarLaw) -> Self {
        Self { entropy_flow: HeatFlow::Conduction { conductance }, temperature }
    }
}

/// Evaluated port quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortFlow {
    pub molar_flow: f64,
    pub entropy_flow: f64,
    pub chemical_potential: f64,
    pub temperature: f64,
}

/// Evaluated heat-source quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceFlow {
    pub entropy_flow: f64,
    pub temperature: f64,
}

/// Internal entropy production split by mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyProduction {
    pub friction: f64,
    pub mixing: f64,
    pub heating: f64,
    pub total: f64,
}

/// External power supplied as work, heat and matter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlows {
    pub work: f64,
    pub heat: f64,
    pub matter: f64,
}

impl PowerFlows {
    pub fn total(&self) -> f64 {
        self.work + self.heat + self.matter
    }
}

/// Every exchange quantity at one `(t, q, v_q, S, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub temperature: f64,
    pub chemical_potential: f64,
    pub friction: DVector<f64>,
    pub external_force: DVector<f64>,
    pub ports: Vec<PortFlow>,
    pub sources: Vec<SourceFlow>,
}

impl Exchange {
    pub fn molar_inflow(&self) -> f64 {
        self.ports.iter().map(|p| p.molar_flow).sum()
    }

    pub fn port_entropy_inflow(&self) -> f64 {
        self.ports.iter().map(|p| p.entropy_flow).sum()
    }

    pub fn source_entropy_inflow(&self) -> f64 {
        self.sources.iter().map(|s| s.entropy_flow).sum()
    }

    /// Total entropy flow `sum J_S^a + sum J_S^b` entering the system.
    pub fn entropy_inflow(&self) -> f64 {
        self.port_entropy_inflow() + self.source_entropy_inflow()
    }

    /// `-sum (J mu_a + J_S T_a) - sum J_S^b T_b`, the affine constraint term.
    pub fn constraint_offset(&self) -> f64 {
        let p = self.power_flows(&DVector::zeros(self.friction.len()));
        -(p.heat + p.matter)
    }

    pub fn power_flows(&self, v_q: &DVector<f64>) -> PowerFlows {
        PowerFlows {
            work: self.external_force.dot(v_q),
            heat: self.sources.iter().map(|s| s.entropy_flow * s.temperature).sum(),
            matter: self.ports.iter().map(|p| p.molar_flow * p.chemical_potential + p.entropy_flow * p.temperature).sum(),
        }
    }

    pub fn entropy_production(&self, v_q: &DVector<f64>) -> EntropyProduction {
        let t = self.temperature;
        let friction = -self.friction.dot(v_q) / t;
        let mixing = self
            .ports
            .iter()
            .map(|p| p.molar_flow * (p.chemical_potential - self.chemical_potential) + p.entropy_flow * (p.temperature - t))
            .sum::<f64>()
            / t;
        let heating = self.sources.iter().map(|s| s.entropy_flow * (s.temperature - t)).sum::<f64>() / t;
        EntropyProduction { friction, mixing, heating, total: friction + mixing + heating }
    }
}

/// A simple open system.
#[derive(Clone)]
pub struct SimpleOpenSystem {
    pub mechanics: Arc<dyn MechanicalLagrangian>,
    pub friction: Option<VectorLaw>,
    pub external_force: Option<VectorLaw>,
    pub ports: Vec<PortModel>,
    pub sources: Vec<HeatSourceModel>,
}

/// Index map of the extended configuration `(q, S, N, Gamma, W, Sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThermoLayout {
    pub n_q: usize,
}

impl ThermoLayout {
    pub fn dim(&self) -> usize {
        self.n_q + 5
    }
    pub fn entropy(&self) -> usize {
        self.n_q
    }
    pub fn moles(&self) -> usize {
        self.n_q + 1
    }
    pub fn thermal(&self) -> usize {
        self.n_q + 2
    }
    pub fn matter(&self) -> usize {
        self.n_q + 3
    }
    pub fn produced(&self) -> usize {
        self.n_q + 4
    }

    /// The `(q, v_q, S, N)` point read from extended coordinates.
    pub fn point(&self, x: &DVector<f64>, v: &DVector<f64>) -> SystemPoint {
        SystemPoint { q: x.rows(0, self.n_q).into_owned(), v_q: v.rows(0, self.n_q).into_owned(), s: x[self.entropy()], n: x[self.moles()] }
    }
}

impl std::fmt::Debug for SimpleOpenSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimpleOpenSystem")
            .field("n_q", &self.mechanics.n_q())
            .field("friction", &self.friction.is_some())
            .field("external_force", &self.external_force.is_some())
            .field("ports", &self.ports.len())
            .field("sources", &self.sources.len())
            .finish()
    }
}

impl SimpleOpenSystem {
    pub fn new(mechanics: Arc<dyn MechanicalLagrangian>) -> Self {
        Self { mechanics, friction: None, external_force: None, ports: Vec::new(), sources: Vec::new() }
    }

    /// Linear friction `F = -gamma v_q`.
    pub fn with_linear_friction(mut self, gamma: f64) -> Self {
        self.friction = Some(Arc::new(move |_, p: &SystemPoint| &p.v_q * -gamma));
        self
    }

    pub fn with_friction(mut self, law: VectorLaw) -> Self {
        self.friction = Some(law);
        self
    }

    pub fn with_external_force(mut self, law: VectorLaw) -> Self {
        self.external_force = Some(law);
        self
    }

    pub fn with_port(mut self, port: PortModel) -> Self {
        self.ports.push(port);
        self
    }

    pub fn with_source(mut self, source: HeatSourceModel) -> Self {
        self.sources.push(source);
        self
    }

    pub fn layout(&self) -> ThermoLayout {
        ThermoLayout { n_q: self.mechanics.n_q() }
    }

    /// `T = -dL/dS`, required to be positive.
    pub fn temperature(&self, t: f64, p: &SystemPoint) -> Result<f64> {
        let temp = -self.mechanics.d_s(&p.q, &p.v_q, p.s, p.n);
        positive(t, temp)?;
        Ok(temp)
    }

    /// `mu = -dL/dN`.
    pub fn chemical_potential(&self, p: &SystemPoint) -> f64 {
        -self.mechanics.d_n(&p.q, &p.v_q, p.s, p.n)
    }

    /// Mechanical energy `<dL/dv, v> - L`.
    pub fn energy(&self, p: &SystemPoint) -> f64 {
        self.mechanics.energy(&p.q, &p.v_q, p.s, p.n)
    }

    pub fn exchange(&self, t: f64, p: &SystemPoint) -> Result<Exchange> {
        let n_q = self.mechanics.n_q();
        self.mechanics.admissible(&p.q, &p.v_q, p.s, p.n)?;
        let temperature = self.temperature(t, p)?;
        let mu = self.chemical_potential(p);
        let vector = |law: &Option<VectorLaw>| -> Result<DVector<f64>> {
            match law {
                None => Ok(DVector::zeros(n_q)),
                Some(f) => {
                    let out = f(t, p);
                    crate::error::check_len("mechanical force", n_q, out.len())?;
                    Ok(out)
                }
            }
        };
        let friction = vector(&self.friction)?;
        let external_force = vector(&self.external_force)?;
        let mut ports = Vec::with_capacity(self.ports.len());
        for port in &self.ports {
            let molar_flow = (port.molar_flow)(t, p);
            let entropy_flow = match &port.entropy_flow {
                EntropyFlow::Direct(f) => f(t, p),
                EntropyFlow::MolarEntropy(f) => f(t, p) * molar_flow,
            };
            let chemical_potential = match &port.chemical_potential {
                Intensive::Prescribed(f) => f(t, p),
                Intensive::System => mu,
            };
            let port_t = match &port.temperature {
                Intensive::Prescribed(f) => f(t, p),
                Intensive::System => temperature,
            };
            positive(t, port_t)?;
            ports.push(PortFlow { molar_flow, entropy_flow, chemical_potential, temperature: port_t });
        }
        let mut sources = Vec::with_capacity(self.sources.len());
        for src in &self.sources {
            let source_t = (src.temperature)(t, p);
            positive(t, source_t)?;
            let entropy_flow = match &src.entropy_flow {
                HeatFlow::Direct(f) => f(t, p),
                HeatFlow::Conduction { conductance } => conductance * (source_t - temperature) / temperature,
            };
            sources.push(SourceFlow { entropy_flow, temperature: source_t });
        }
        Ok(Exchange { temperature, chemical_potential: mu, friction, external_force, ports, sources })
    }

    /// Internal entropy production with its breakdown.
    pub fn entropy_production(&self, t: f64, p: &SystemPoint) -> Result<EntropyProduction> {
        Ok(self.exchange(t, p)?.entropy_production(&p.v_q))
    }

    /// `(P_W, P_H, P_M)`.
    pub fn power_flows(&self, t: f64, p: &SystemPoint) -> Result<PowerFlows> {
        Ok(self.exchange(t, p)?.power_flows(&p.v_q))
    }
}

fn positive(t: f64, value: f64) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(DiracError::NonPositiveTemperature { t, value });
    }
    Ok(())
}

#[cfg(test)]
mod tests;
