//! JSON scenario files and the systems they describe.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Deserialize;

use super::CliError;
use crate::dynamics::{initial_state, Formulation};
use crate::geometry::PontryaginState;
use crate::lagrangian::fixtures::{ParticleHamiltonian, ParticleLagrangian, Potential, TimeAffineConstraint};
use crate::thermo::{
    ideal_gas_fixture, EntropyFlow, HeatFlow, HeatSourceModel, PortModel, ScalarLaw, SimpleOpenSystem, SystemPoint, ThermoState,
};

/// A value that is either constant or piecewise linear between `[t, value]`
/// breakpoints, held constant outside them.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    Breakpoints(Vec<[f64; 2]>),
}

impl Schedule {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant(c) => *c,
            Schedule::Breakpoints(bp) => {
                let first = bp[0];
                if t <= first[0] {
                    return first[1];
                }
                for w in bp.windows(2) {
                    let ([t0, y0], [t1, y1]) = (w[0], w[1]);
                    if t <= t1 {
                        return if t1 > t0 { y0 + (y1 - y0) * (t - t0) / (t1 - t0) } else { y1 };
                    }
                }
                bp[bp.len() - 1][1]
            }
        }
    }

    fn validate(&self, field: &str) -> Result<(), CliError> {
        match self {
            Schedule::Constant(c) if !c.is_finite() => Err(CliError::field(field, "must be finite")),
            Schedule::Breakpoints(bp) if bp.is_empty() => Err(CliError::field(field, "needs at least one breakpoint")),
            Schedule::Breakpoints(bp) => {
                if bp.iter().flatten().any(|z| !z.is_finite()) {
                    return Err(CliError::field(field, "breakpoints must be finite"));
                }
                if bp.windows(2).any(|w| w[1][0] < w[0][0]) {
                    return Err(CliError::field(field, "breakpoint times must be nondecreasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn law(&self) -> ScalarLaw {
        let s = self.clone();
        Arc::new(move |t, _| s.at(t))
    }
}

/// Integration method: one of the Dirac formulations or the reduced
/// thermodynamic equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dirac(Formulation),
    Reduced,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Dirac(Formulation::Pontryagin),
        Method::Dirac(Formulation::LagrangeDirac),
        Method::Dirac(Formulation::HamiltonDirac),
        Method::Reduced,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Dirac(x) => write!(f, "{x}"),
            Method::Reduced => f.write_str("reduced"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "reduced" => Ok(Method::Reduced),
            other => other
                .parse::<Formulation>()
                .map(Method::Dirac)
                .map_err(|_| format!("unknown formulation '{other}' (expected pontryagin, lagrange-dirac, hamilton-dirac or reduced)")),
        }
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "builtin", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    IdealGasPiston(PistonSpec),
    NonholonomicParticle(ParticleSpec),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSpec {
    #[serde(default = "one_dim")]
    pub dimension: usize,
    pub mass: f64,
    #[serde(default)]
    pub stiffness: f64,
    pub heat_capacity: f64,
    pub reference_temperature: f64,
    #[serde(default)]
    pub reference_molar_entropy: f64,
}

fn one_dim() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PistonInitial {
    pub q: Vec<f64>,
    pub v_q: Vec<f64>,
    pub temperature: f64,
    pub moles: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PortSpec {
    /// Inflowing (or outflowing) matter at a prescribed state. The chemical
    /// potential defaults to the ideal-gas value `T (c - s)`.
    Prescribed {
        molar_flow: Schedule,
        temperature: Schedule,
        molar_entropy: Schedule,
        #[serde(default)]
        chemical_potential: Option<Schedule>,
    },
    /// Matter leaving or entering at the system's own state.
    Matched { molar_flow: Schedule },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub temperature: Schedule,
    /// Conduction law `kappa (T_b - T) / T`; exclusive with `entropy_flow`.
    #[serde(default)]
    pub conductance: Option<f64>,
    #[serde(default)]
    pub entropy_flow: Option<Schedule>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PistonSpec {
    pub gas: GasSpec,
    #[serde(default)]
    pub friction: f64,
    pub initial: PistonInitial,
    #[serde(default)]
    pub ports: Vec<PortSpec>,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleInitial {
    #[serde(default)]
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// A particle in a time-modulated potential with the constraint
/// `xdot_2 = t xdot_1 + B(t)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub mass: Vec<f64>,
    #[serde(default)]
    pub stiffness: f64,
    #[serde(default)]
    pub quartic: f64,
    #[serde(default)]
    pub modulation: f64,
    #[serde(default)]
    pub modulation_frequency: f64,
    pub constraint: ConstraintSpec,
    pub initial: ParticleInitial,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub formulation: Method,
    pub h: f64,
    pub horizon: f64,
    #[serde(default)]
    pub post_integrate_p_t: bool,
}

/// Pass thresholds for the run summary, comparisons and checks.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub covariant_energy: f64,
    pub first_law: f64,
    pub dirac_residual: f64,
    pub kinematic: f64,
    pub entropy_decomposition: f64,
    pub multiplier: f64,
    /// Smallest acceptable entropy production (slightly negative for roundoff).
    pub entropy_production_floor: f64,
    pub compare: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            covariant_energy: 1e-6,
            first_law: 1e-6,
            dirac_residual: 1e-8,
            kinematic: 1e-8,
            entropy_decomposition: 1e-10,
            multiplier: 1e-8,
            entropy_production_floor: -1e-12,
            compare: 1e-6,
        }
    }
}

impl Tolerances {
    /// Sets every upper-bound tolerance to `tol` and the production floor to `-tol`.
    pub fn override_all(&mut self, tol: f64) {
        self.covariant_energy = tol;
        self.first_law = tol;
        self.dirac_residual = tol;
        self.kinematic = tol;
        self.entropy_decomposition = tol;
        self.multiplier = tol;
        self.entropy_production_floor = -tol;
        self.compare = tol;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn steps(&self) -> usize {
        (self.integrator.horizon / self.integrator.h).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let ig = &self.integrator;
        positive("integrator.h", ig.h)?;
        positive("integrator.horizon", ig.horizon)?;
        if ig.horizon / ig.h > 1e8 {
            return Err(CliError::field("integrator.horizon", "more than 1e8 steps requested"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.covariant_energy", t.covariant_energy),
            ("tolerances.first_law", t.first_law),
            ("tolerances.dirac_residual", t.dirac_residual),
            ("tolerances.kinematic", t.kinematic),
            ("tolerances.entropy_decomposition", t.entropy_decomposition),
            ("tolerances.multiplier", t.multiplier),
            ("tolerances.compare", t.compare),
        ] {
            positive(name, v)?;
        }
        match &self.system {
            SystemConfig::IdealGasPiston(p) => p.validate(),
            SystemConfig::NonholonomicParticle(p) => p.validate(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::field(field, &format!("must be positive, got {v}")))
    }
}

impl PistonSpec {
    fn validate(&self) -> Result<(), CliError> {
        let g = &self.gas;
        if g.dimension == 0 {
            return Err(CliError::field("system.gas.dimension", "must be at least 1"));
        }
        positive("system.gas.mass", g.mass)?;
        positive("system.gas.heat_capacity", g.heat_capacity)?;
        positive("system.gas.reference_temperature", g.reference_temperature)?;
        if !(g.stiffness >= 0.0 && g.stiffness.is_finite()) {
            return Err(CliError::field("system.gas.stiffness", "must be nonnegative"));
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(CliError::field("system.friction", "must be nonnegative"));
        }
        let init = &self.initial;
        if init.q.len() != g.dimension || init.v_q.len() != g.dimension {
            return Err(CliError::field("system.initial", &format!("q and v_q need {} entries", g.dimension)));
        }
        positive("system.initial.temperature", init.temperature)?;
        positive("system.initial.moles", init.moles)?;
        for (i, port) in self.ports.iter().enumerate() {
            let f = |name: &str| format!("system.ports[{i}].{name}");
            match port {
                PortSpec::Prescribed { molar_flow, temperature, molar_entropy, chemical_potential } => {
                    molar_flow.validate(&f("molar_flow"))?;
                    temperature.validate(&f("temperature"))?;
                    molar_entropy.validate(&f("molar_entropy"))?;
                    if let Some(mu) = chemical_potential {
                        mu.validate(&f("chemical_potential"))?;
                    }
                }
                PortSpec::Matched { molar_flow } => molar_flow.validate(&f("molar_flow"))?,
            }
        }
        for (i, src) in self.sources.iter().enumerate() {
            let f = |name: &str| format!("system.sources[{i}].{name}");
            src.temperature.validate(&f("temperature"))?;
            match (&src.conductance, &src.entropy_flow) {
                (Some(k), None) if *k >= 0.0 && k.is_finite() => {}
                (Some(_), None) => return Err(CliError::field(&f("conductance"), "must be nonnegative")),
                (None, Some(s)) => s.validate(&f("entropy_flow"))?,
                _ => return Err(CliError::field(&f("conductance"), "give exactly one of conductance or entropy_flow")),
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<(SimpleOpenSystem, ThermoState), CliError> {
        let g = &self.gas;
        let gas = ideal_gas_fixture(g.dimension, g.mass, g.stiffness, g.heat_capacity, g.reference_temperature, g.reference_molar_entropy)?;
        let c = g.heat_capacity;
        let mut sys = SimpleOpenSystem::new(gas.clone()).with_linear_friction(self.friction);
        for port in &self.ports {
            sys = sys.with_port(match port {
                PortSpec::Prescribed { molar_flow, temperature, molar_entropy, chemical_potential } => {
                    let mu = match chemical_potential {
                        Some(mu) => mu.law(),
                        None => {
                            let (t, s) = (temperature.clone(), molar_entropy.clone());
                            Arc::new(move |time, _: &SystemPoint| t.at(time) * (c - s.at(time))) as ScalarLaw
                        }
                    };
                    PortModel::new(molar_flow.law(), EntropyFlow::MolarEntropy(molar_entropy.law()), mu, temperature.law())
                }
                PortSpec::Matched { molar_flow } => {
                    PortModel::matched(molar_flow.law(), EntropyFlow::MolarEntropy(Arc::new(|_, p: &SystemPoint| p.s / p.n)))
                }
            });
        }
        for src in &self.sources {
            let entropy_flow = match (&src.conductance, &src.entropy_flow) {
                (Some(k), _) => HeatFlow::Conduction { conductance: *k },
                (None, Some(s)) => HeatFlow::Direct(s.law()),
                (None, None) => unreachable!("validated"),
            };
            sys = sys.with_source(HeatSourceModel { entropy_flow, temperature: src.temperature.law() });
        }
        let init = &self.initial;
        let s = gas.entropy_at(init.temperature, init.moles);
        let state = ThermoState::at_rest_displacements(
            &sys,
            0.0,
            DVector::from_vec(init.q.clone()),
            DVector::from_vec(init.v_q.clone()),
            s,
            init.moles,
        );
        Ok((sys, state))
    }
}

impl ParticleSpec {
    fn validate(&self) -> Result<(), CliError> {
        let n = self.mass.len();
        if n < 2 {
            return Err(CliError::field("system.mass", "needs at least two entries"));
        }
        if self.mass.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(CliError::field("system.mass", "entries must be positive"));
        }
        if self.initial.x.len() != n || self.initial.v.len() != n {
            return Err(CliError::field("system.initial", &format!("x and v need {n} entries")));
        }
        let c = self.constraint();
        let (t, v) = (self.initial.t, &self.initial.v);
        let violation = t * v[0] - v[1] + c.b(t);
        if violation.abs() > 1e-9 * (1.0 + v[1].abs()) {
            return Err(CliError::field(
                "system.initial.v",
                &format!("violates the constraint by {violation:e}; need v[1] = t v[0] + B(t) = {}", t * v[0] + c.b(t)),
            ));
        }
        Ok(())
    }

    pub fn constraint(&self) -> TimeAffineConstraint {
        let c = &self.constraint;
        TimeAffineConstraint { n: self.mass.len(), offset: c.offset, amplitude: c.amplitude, frequency: c.frequency }
    }

    pub fn lagrangian(&self) -> ParticleLagrangian {
        ParticleLagrangian {
            mass: DVector::from_vec(self.mass.clone()),
            potential: Potential {
                stiffness: self.stiffness,
                quartic: self.quartic,
                modulation: self.modulation,
                frequency: self.modulation_frequency,
            },
        }
    }

    pub fn hamiltonian(&self) -> ParticleHamiltonian {
        ParticleHamiltonian::from(&self.lagrangian())
    }

    pub fn initial_state(&self) -> Result<PontryaginState, CliError> {
        let i = &self.initial;
        Ok(initial_state(&self.lagrangian(), i.t, DVector::from_vec(i.x.clone()), DVector::from_vec(i.v.clone()))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_interpolates_and_clamps() {
        let s: Schedule = serde_json::from_str("[[1.0, 10.0], [3.0, 30.0], [3.0, 50.0]]").unwrap();
        assert_eq!(s.at(0.0), 10.0);
        assert_eq!(s.at(2.0), 20.0);
        assert_eq!(s.at(3.0), 30.0);
        assert_eq!(s.at(9.0), 50.0);
        let c: Schedule = serde_json::from_str("4.5").unwrap();
        assert_eq!(c.at(-1e9), 4.5);
        assert!(Schedule::Breakpoints(vec![]).validate("x").is_err());
        assert!(Schedule::Breakpoints(vec![[2.0, 0.0], [1.0, 0.0]]).validate("x").is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        let err = "euler".parse::<Method>().unwrap_err();
        assert!(err.contains("reduced") && err.contains("pontryagin"));
    }

    #[test]
    fn tolerance_override_sets_floor_negative() {
        let mut t = Tolerances::default();
        t.override_all(1e-3);
        assert_eq!(t.first_law, 1e-3);
        assert_eq!(t.entropy_production_floor, -1e-3);
    }
}
