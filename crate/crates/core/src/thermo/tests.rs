use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::dynamics::{integrate, monitor_invariants, pontryagin_dirac_residual, recover_multipliers, Formulation, StepOptions};
use crate::error::DiracError;
use crate::geometry::{annihilator_basis, ConstraintSet, Unconstrained};
use crate::lagrangian::fixtures::{ParticleLagrangian, Potential};
use crate::lagrangian::{check_derivatives, Lagrangian, SampleBox};
use crate::linalg::{inf_norm, NewtonOptions};

fn gas(n_q: usize, stiffness: f64) -> Arc<IdealGas> {
    ideal_gas_fixture(n_q, 1.0, stiffness, 12.47, 300.0, 10.0).unwrap()
}

fn state(sys: &SimpleOpenSystem, q: DVector<f64>, v: DVector<f64>, temp: f64, moles: f64) -> ThermoState {
    let g = IdealGas { n_q: q.len(), mass: 1.0, stiffness: 0.0, heat_capacity: 12.47, t0: 300.0, s0: 10.0 };
    ThermoState::at_rest_displacements(sys, 0.0, q, v, g.entropy_at(temp, moles), moles)
}

/// `L = 0` in every variable.
struct Null;

impl MechanicalLagrangian for Null {
    fn n_q(&self) -> usize {
        1
    }
    fn value(&self, _: &DVector<f64>, _: &DVector<f64>, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_q(&self, _: &DVector<f64>, _: &DVector<f64>, _: f64, _: f64) -> DVector<f64> {
        dvector![0.0]
    }
    fn d_v(&self, _: &DVector<f64>, _: &DVector<f64>, _: f64, _: f64) -> DVector<f64> {
        dvector![0.0]
    }
    fn d_s(&self, _: &DVector<f64>, _: &DVector<f64>, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_n(&self, _: &DVector<f64>, _: &DVector<f64>, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_vv(&self, _: &DVector<f64>, _: &DVector<f64>, _: f64, _: f64) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
}

/// Mass depending on position, entropy and moles:
/// `L = (1 + q^2 + S/10 + N) v^2 / 2 - U_gas(S, N)`.
struct Coupled(IdealGas);

impl Coupled {
    fn mass(&self, q: &DVector<f64>, s: f64, n: f64) -> f64 {
        1.0 + q[0] * q[0] + 0.1 * s + n
    }
}

impl MechanicalLagrangian for Coupled {
    fn n_q(&self) -> usize {
        1
    }
    fn value(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> f64 {
        0.5 * self.mass(q, s, n) * v[0] * v[0] - self.0.internal_energy(s, n)
    }
    fn d_q(&self, q: &DVector<f64>, v: &DVector<f64>, _: f64, _: f64) -> DVector<f64> {
        dvector![q[0] * v[0] * v[0]]
    }
    fn d_v(&self, q: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> DVector<f64> {
        dvector![self.mass(q, s, n) * v[0]]
    }
    fn d_s(&self, _: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> f64 {
        0.05 * v[0] * v[0] - self.0.temperature(s, n)
    }
    fn d_n(&self, _: &DVector<f64>, v: &DVector<f64>, s: f64, n: f64) -> f64 {
        0.5 * v[0] * v[0] - self.0.chemical_potential(s, n)
    }
    fn d_vv(&self, q: &DVector<f64>, _: &DVector<f64>, s: f64, n: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.mass(q, s, n))
    }
}

fn coupled() -> Coupled {
    Coupled(IdealGas { n_q: 1, mass: 1.0, stiffness: 0.0, heat_capacity: 12.47, t0: 300.0, s0: 10.0 })
}

fn single_port() -> PortModel {
    PortModel::new(constant(0.1), EntropyFlow::Direct(constant(0.02)), constant(5.0), constant(310.0))
}

#[test]
fn extended_lagrangian_value_on_null_mechanics() {
    let sys = SimpleOpenSystem::new(Arc::new(Null));
    let l = build_extended_lagrangian(&sys);
    // x = (q, S, N, Gamma, W, Sigma)
    let x = dvector![0.0, 0.0, 3.0, 0.0, 0.0, 0.0];
    let v = dvector![0.0, 0.0, 0.0, 0.0, 2.0, 0.0];
    assert_eq!(l.value(0.0, &x, &v), 6.0);
}

#[test]
fn extended_lagrangian_partials_in_thermal_slots() {
    let sys = SimpleOpenSystem::new(gas(1, 1.0));
    let l = build_extended_lagrangian(&sys);
    let lay = sys.layout();
    let x = dvector![0.2, 0.11, 0.01, 4.0, -3.0, 0.02];
    let v = dvector![0.5, 0.1, 0.2, 310.0, 40.0, 0.003];
    let dx = l.d_x(0.0, &x, &v);
    let temp = IdealGas { n_q: 1, mass: 1.0, stiffness: 1.0, heat_capacity: 12.47, t0: 300.0, s0: 10.0 }.temperature(0.11, 0.01);
    assert_relative_eq!(dx[lay.entropy()], -temp + 310.0, max_relative = 1e-14);
    assert_eq!(dx[lay.produced()], -310.0);
    assert_eq!(dx[lay.thermal()], 0.0);
    assert_eq!(dx[lay.matter()], 0.0);
    let dv = l.d_v(0.0, &x, &v);
    assert_eq!(dv[lay.thermal()], 0.11 - 0.02);
    assert_eq!(dv[lay.matter()], 0.01);
    assert_eq!(l.d_t(1.0, &x, &v), 0.0);
    let hess = l.d_vv(0.0, &x, &v);
    assert_eq!(hess[(0, 0)], 1.0);
    assert_eq!(hess.iter().filter(|z| **z != 0.0).count(), 1);
    assert_eq!(l.regular_block(), vec![0]);
}

#[test]
fn extended_gas_lagrangian_passes_derivative_check() {
    let sys = SimpleOpenSystem::new(gas(2, 3.0));
    let l = build_extended_lagrangian(&sys);
    let x = dvector![0.1, -0.2, 0.12, 0.01, 5.0, 2.0, 0.001];
    let v = dvector![0.3, 0.4, 0.01, 0.001, 300.0, 100.0, 0.002];
    let mut domain = SampleBox::around(0.0, &x, &v, 0.2);
    // Stay inside the gas's physical range: S near N s0 and N > 0.
    domain.x[2] = (0.09, 0.15);
    domain.x[3] = (0.008, 0.012);
    let report = check_derivatives(&l, &domain, 200, 7);
    assert!(report.passed, "{report}");
}

#[test]
fn isolated_constraint_row_has_only_temperature() {
    let sys = SimpleOpenSystem::new(gas(1, 1.0));
    let c = build_constraints(&sys);
    let s = state(&sys, dvector![0.0], dvector![0.3], 300.0, 0.01);
    let k = c.coefficients(0.0, &s.configuration(), &lift_node(&sys, &s).unwrap().v).unwrap();
    assert_eq!(c.count(), 1);
    assert_eq!(k.b[0], 0.0);
    let expect = dvector![0.0, 0.0, 0.0, 0.0, 0.0, 300.0];
    assert!((k.a.row(0).transpose() - expect).amax() < 1e-10);
}

#[test]
fn single_port_offset_and_power() {
    let sys = SimpleOpenSystem::new(gas(1, 1.0)).with_port(single_port());
    let s = state(&sys, dvector![0.0], dvector![0.0], 300.0, 0.01);
    let ex = sys.exchange(0.0, &s.point()).unwrap();
    assert_relative_eq!(ex.constraint_offset(), -6.7, max_relative = 1e-14);
    let pw = sys.power_flows(0.0, &s.point()).unwrap();
    assert_relative_eq!(pw.matter, 6.7, max_relative = 1e-14);
    assert_eq!(pw.heat, 0.0);
    assert_eq!(pw.work, 0.0);
    let rates = reduced_rhs(&sys, &s).unwrap();
    assert_relative_eq!(rates.n_dot, 0.1, max_relative = 1e-15);
    assert_relative_eq!(rates.p_t_dot, -(pw.heat + pw.matter), max_relative = 1e-15);
}

#[test]
fn annihilator_of_port_and_friction_row() {
    // gamma = 2 friction at unit velocity, one port, T = 300.
    let sys = SimpleOpenSystem::new(gas(1, 1.0)).with_linear_friction(2.0).with_port(single_port());
    let s = state(&sys, dvector![0.0], dvector![1.0], 300.0, 0.01);
    let v = lift_node(&sys, &s).unwrap().v;
    let basis = annihilator_basis(&build_constraints(&sys), 0.0, &s.configuration(), &v).unwrap();
    assert_eq!(basis.len(), 1);
    let lay = sys.layout();
    let a = &basis[0];
    let norm = a.p[lay.produced()];
    assert_relative_eq!(norm, 300.0, max_relative = 1e-12);
    let tol = 1e-14;
    assert_relative_eq!(a.p_t / norm, -6.7 / 300.0, max_relative = tol);
    assert_relative_eq!(a.p[0] / norm, -2.0 / 300.0, max_relative = tol);
    assert_relative_eq!(a.p[lay.thermal()] / norm, 0.02 / 300.0, max_relative = tol);
    assert_relative_eq!(a.p[lay.matter()] / norm, 0.1 / 300.0, max_relative = tol);
    assert_eq!(a.p[lay.entropy()], 0.0);
    assert_eq!(a.p[lay.moles()], 0.0);
}

#[test]
fn isolated_free_gas_is_at_rest_thermally() {
    let sys = SimpleOpenSystem::new(gas(1, 0.0));
    let s = state(&sys, dvector![0.4], dvector![0.7], 300.0, 0.01);
    let r = reduced_rhs(&sys, &s).unwrap();
    assert_eq!(r.v_q_dot[0], 0.0);
    assert_eq!(r.s_dot, 0.0);
    assert_eq!(r.n_dot, 0.0);
    assert_eq!(r.sigma_dot, 0.0);
    assert_eq!(r.p_t_dot, 0.0);
    let pw = sys.power_flows(0.0, &s.point()).unwrap();
    assert_eq!((pw.work, pw.heat, pw.matter), (0.0, 0.0, 0.0));
}

#[test]
fn friction_heats_at_the_dissipated_rate() {
    let sys = SimpleOpenSystem::new(gas(1, 0.0)).with_linear_friction(2.0);
    let s = state(&sys, dvector![0.0], dvector![1.0], 300.0, 0.01);
    let r = reduced_rhs(&sys, &s).unwrap();
    assert_relative_eq!(r.s_dot, 2.0 / 300.0, max_relative = 1e-13);
    let prod = sys.entropy_production(0.0, &s.point()).unwrap();
    assert_relative_eq!(prod.friction, 1.0 / 150.0, max_relative = 1e-13);
    assert_eq!(prod.mixing, 0.0);
    assert_eq!(prod.heating, 0.0);
    assert_relative_eq!(r.v_q_dot[0], -2.0, max_relative = 1e-15);
}

#[test]
fn matched_port_mixes_nothing() {
    let port = PortModel::matched(constant(0.3), EntropyFlow::MolarEntropy(Arc::new(|_, p: &SystemPoint| p.s / p.n)));
    let sys = SimpleOpenSystem::new(gas(1, 1.0)).with_port(port);
    let s = state(&sys, dvector![0.1], dvector![0.0], 290.0, 0.02);
    let prod = sys.entropy_production(0.0, &s.point()).unwrap();
    assert_eq!(prod.mixing, 0.0);
    assert_eq!(prod.total, 0.0);
}

#[test]
fn external_force_supplies_work() {
    let sys = SimpleOpenSystem::new(gas(1, 1.0)).with_external_force(Arc::new(|t, _| dvector![2.0 + t]));
    let s = state(&sys, dvector![0.1], dvector![0.5], 300.0, 0.02);
    let pw = sys.power_flows(0.0, &s.point()).unwrap();
    assert_eq!(pw.work, 1.0);
    let r = reduced_rhs(&sys, &s).unwrap();
    assert_relative_eq!(r.v_q_dot[0], 2.0 - 0.1, max_relative = 1e-15);
}

#[test]
fn gas_reference_point_and_extensivity() {
    let g = IdealGas { n_q: 1, mass: 1.0, stiffness: 0.0, heat_capacity: 12.47, t0: 300.0, s0: 10.0 };
    assert_eq!(g.temperature(0.02 * 10.0, 0.02), 300.0);
    let (s, n) = (0.31, 0.025);
    assert_relative_eq!(g.temperature(2.0 * s, 2.0 * n), g.temperature(s, n), max_relative = 1e-14);
    assert_relative_eq!(g.entropy_at(g.temperature(s, n), n), s, max_relative = 1e-13);
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[test]
fn gas_intensives_match_differences_of_internal_energy() {
    let g = IdealGas { n_q: 1, mass: 1.0, stiffness: 0.0, heat_capacity: 12.47, t0: 300.0, s0: 10.0 };
    let n = 0.02;
    let s = n * g.s0;
    let mu_fd = central(|m| g.internal_energy(s, m), n, 1e-7);
    assert_relative_eq!(g.chemical_potential(s, n), mu_fd, max_relative = 1e-8);
    assert_relative_eq!(g.chemical_potential(s, n), g.t0 * (g.heat_capacity - g.s0), max_relative = 1e-14);
    let t_fd = central(|e| g.internal_energy(e, n), s, 1e-6);
    assert_relative_eq!(g.temperature(s, n), t_fd, max_relative = 1e-8);
}

#[test]
fn gas_mixed_partials_are_symmetric() {
    let g = IdealGas { n_q: 1, mass: 1.0, stiffness: 0.0, heat_capacity: 12.47, t0: 300.0, s0: 10.0 };
    for &(s, n) in &[(0.2, 0.02), (0.5, 0.04), (0.05, 0.004)] {
        let d_t_dn = central(|m| g.temperature(s, m), n, 1e-6 * n);
        let d_mu_ds = central(|e| g.chemical_potential(e, n), s, 1e-6 * s);
        assert_relative_eq!(d_t_dn, d_mu_ds, max_relative = 1e-8);
        let analytic = -g.temperature(s, n) * s / (g.heat_capacity * n * n);
        assert_relative_eq!(d_t_dn, analytic, max_relative = 1e-8);
    }
}

#[test]
fn fixture_rejects_nonpositive_parameters() {
    assert!(matches!(ideal_gas_fixture(1, 0.0, 1.0, 12.0, 300.0, 0.0), Err(DiracError::InvalidParameter(_))));
    assert!(matches!(ideal_gas_fixture(1, 1.0, 1.0, -1.0, 300.0, 0.0), Err(DiracError::InvalidParameter(_))));
    assert!(matches!(ideal_gas_fixture(1, 1.0, 1.0, 12.0, 0.0, 0.0), Err(DiracError::InvalidParameter(_))));
    assert!(matches!(ideal_gas_fixture(1, 1.0, -1.0, 12.0, 300.0, 0.0), Err(DiracError::InvalidParameter(_))));
}

#[test]
fn nonpositive_temperatures_are_rejected() {
    let sys = SimpleOpenSystem::new(gas(1, 1.0));
    let mut s = state(&sys, dvector![0.0], dvector![0.0], 300.0, 0.01);
    s.n = -0.01;
    assert!(matches!(reduced_rhs(&sys, &s), Err(DiracError::Inadmissible(_))));
    // Kinetic energy that grows with entropy can push -dL/dS below zero.
    let hot = SimpleOpenSystem::new(Arc::new(coupled()));
    let fast = ThermoState { t: 0.0, q: dvector![0.0], v_q: dvector![100.0], s: 0.2, n: 0.02, gamma: 0.0, w: 0.0, sigma: 0.0, p_t: 0.0 };
    assert!(matches!(reduced_rhs(&hot, &fast), Err(DiracError::NonPositiveTemperature { value, .. }) if value < 0.0));
    let cold = SimpleOpenSystem::new(gas(1, 1.0)).with_source(HeatSourceModel::conduction(1.0, of_time(|t| 10.0 - t)));
    let s = state(&cold, dvector![0.0], dvector![0.0], 300.0, 0.01);
    assert!(reduced_rhs(&cold, &s).is_ok());
    let late = ThermoState { t: 11.0, ..s };
    assert!(matches!(reduced_rhs(&cold, &late), Err(DiracError::NonPositiveTemperature { t, .. }) if t == 11.0));
}

#[test]
fn default_mixed_partials_match_analytic() {
    let l = coupled();
    let (q, v, s, n) = (dvector![0.3], dvector![0.7], 0.25, 0.02);
    assert_relative_eq!(l.d_vq(&q, &v, s, n)[(0, 0)], 2.0 * 0.3 * 0.7, max_relative = 1e-8);
    assert_relative_eq!(l.d_vs(&q, &v, s, n)[0], 0.1 * 0.7, max_relative = 1e-8);
    assert_relative_eq!(l.d_vn(&q, &v, s, n)[0], 0.7, max_relative = 1e-8);
}

#[test]
fn coupled_mass_matrix_solve_satisfies_euler_lagrange() {
    let mech = Arc::new(coupled());
    let sys = SimpleOpenSystem::new(mech.clone()).with_linear_friction(0.4).with_port(single_port());
    let st = ThermoState { t: 0.0, q: dvector![0.3], v_q: dvector![0.7], s: 0.25, n: 0.02, gamma: 0.0, w: 0.0, sigma: 0.0, p_t: 0.0 };
    let r = reduced_rhs(&sys, &st).unwrap();
    // d/dt dL/dv along the rates, by differences.
    let path = |e: f64| mech.d_v(&(&st.q + &r.q_dot * e), &(&st.v_q + &r.v_q_dot * e), st.s + r.s_dot * e, st.n + r.n_dot * e)[0];
    let lhs = central(path, 0.0, 1e-6);
    let rhs = mech.d_q(&st.q, &st.v_q, st.s, st.n)[0] - 0.4 * st.v_q[0];
    assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
}

#[test]
fn displacement_rates_are_the_intensives() {
    let sys = PistonConfig::default().system().unwrap();
    let s = state(&sys, dvector![0.1, 0.0], dvector![0.0, 0.2], 310.0, 0.01);
    let r = reduced_rhs(&sys, &s).unwrap();
    assert_eq!(r.gamma_dot, sys.temperature(0.0, &s.point()).unwrap());
    assert_eq!(r.w_dot, sys.chemical_potential(&s.point()));
}

fn arbitrary_open_system() -> impl Strategy<Value = (SimpleOpenSystem, ThermoState)> {
    (
        (0.0..5.0f64, -0.05..0.05f64, 1.0..20.0f64, 200.0..400.0f64),
        (-0.1..0.1f64, 100.0..500.0f64, 0.0..2.0f64, 200.0..400.0f64),
        (-1.0..1.0f64, -1.0..1.0f64, 250.0..350.0f64, 0.005..0.05f64),
    )
        .prop_map(|((gamma, flow, s_a, t_a), (flow2, mu2, kappa, t_b), (q, v, temp, moles))| {
            let sys = SimpleOpenSystem::new(gas(1, 2.0))
                .with_linear_friction(gamma)
                .with_port(PortModel::new(
                    constant(flow),
                    EntropyFlow::MolarEntropy(constant(s_a)),
                    constant(t_a * (12.47 - s_a)),
                    constant(t_a),
                ))
                .with_port(PortModel::new(constant(flow2), EntropyFlow::Direct(constant(0.01)), constant(mu2), constant(t_a)))
                .with_source(HeatSourceModel::conduction(kappa, constant(t_b)));
            let st = state(&sys, dvector![q], dvector![v], temp, moles);
            (sys, st)
        })
}

proptest! {
    #[test]
    fn entropy_rate_routes_agree((sys, st) in arbitrary_open_system()) {
        let r = reduced_rhs(&sys, &st).unwrap();
        let scale = 1.0 + r.s_dot.abs() + r.p_gamma_dot.abs();
        prop_assert!((r.s_dot - r.sigma_dot - r.p_gamma_dot).abs() <= 1e-12 * scale);
        prop_assert!((r.production.total - r.sigma_dot).abs() <= 1e-12 * (1.0 + r.sigma_dot.abs()));
        let pw = sys.power_flows(st.t, &st.point()).unwrap();
        prop_assert!((r.p_t_dot + pw.heat + pw.matter).abs() <= 1e-12 * (1.0 + pw.matter.abs()));
    }

    #[test]
    fn conduction_and_friction_never_destroy_entropy(
        gamma in 0.0..10.0f64, kappa in 0.0..10.0f64, t_b in 1.0..1000.0f64, temp in 1.0..1000.0f64, v in -5.0..5.0f64,
    ) {
        let sys = SimpleOpenSystem::new(gas(1, 1.0))
            .with_linear_friction(gamma)
            .with_source(HeatSourceModel::conduction(kappa, constant(t_b)));
        let st = state(&sys, dvector![0.0], dvector![v], temp, 0.01);
        let prod = sys.entropy_production(0.0, &st.point()).unwrap();
        let t = sys.temperature(0.0, &st.point()).unwrap();
        let expect = kappa * (t_b - t).powi(2) / (t * t);
        prop_assert!(prod.heating >= 0.0);
        prop_assert!((prod.heating - expect).abs() <= 1e-12 * (1.0 + expect));
        prop_assert!(prod.friction >= 0.0);
        prop_assert!(prod.total >= -1e-12);
    }

    #[test]
    fn thermo_state_round_trips(q in -1.0..1.0f64, v in -1.0..1.0f64, s in 0.0..1.0f64, g in -5.0..5.0f64) {
        let st = ThermoState { t: 0.5, q: dvector![q, -q], v_q: dvector![v, 2.0 * v], s, n: 0.1, gamma: g, w: -g, sigma: 0.3, p_t: -7.0 };
        let back = ThermoState::from_vec(0.5, 2, &st.to_vec()).unwrap();
        prop_assert_eq!(back, st);
    }
}

fn piston_run(h: f64, steps: usize) -> (SimpleOpenSystem, ReducedTrajectory) {
    let cfg = PistonConfig::default();
    let sys = cfg.system().unwrap();
    let init = cfg.initial_state(&sys, dvector![0.1, 0.0], dvector![0.0, 0.2], 300.0, 0.01);
    let traj = integrate_reduced(&sys, init, h, steps, NewtonOptions::default()).unwrap();
    (sys, traj)
}

#[test]
fn lifted_reduced_path_solves_the_dirac_system() {
    let (sys, traj) = piston_run(1e-3, 200);
    let lifted = lift_reduced(&sys, &traj).unwrap();
    let parts = ThermoDirac::new(&sys);
    let lay = sys.layout();
    for (node, st) in lifted.nodes.iter().zip(&traj.nodes) {
        assert_eq!(node.p[lay.entropy()], 0.0);
        assert_eq!(node.p[lay.moles()], 0.0);
        assert_eq!(node.p[lay.produced()], 0.0);
        assert_eq!(node.p[lay.thermal()], st.s - st.sigma);
        assert_eq!(node.p[lay.matter()], st.n);
    }
    for stage in &lifted.stages {
        assert!((stage.lambda[0] - 1.0).abs() < 1e-9, "multiplier {}", stage.lambda[0]);
        let r =
            pontryagin_dirac_residual(&parts.lagrangian, &parts.constraints, Some(&parts.force), &stage.state, &stage.rate, &stage.lambda)
                .unwrap();
        assert!(inf_norm(&r) <= 1e-8, "residual {}", inf_norm(&r));
        let fit = recover_multipliers(&parts.lagrangian, &parts.constraints, Some(&parts.force), &stage.state, &stage.rate).unwrap();
        assert!(fit.momentum_residual <= 1e-8 && fit.energy_residual <= 1e-8);
    }
}

#[test]
fn full_dae_tracks_reduced_path() {
    let (sys, traj) = piston_run(1e-3, 100);
    let lifted = lift_reduced(&sys, &traj).unwrap();
    let parts = ThermoDirac::new(&sys);
    let dirac = parts.dirac_system();
    for f in [Formulation::Pontryagin, Formulation::LagrangeDirac] {
        let full = integrate(&dirac, f, lifted.nodes[0].clone(), 1e-3, 100, &StepOptions::default()).unwrap();
        for (a, b) in full.nodes.iter().zip(&lifted.nodes) {
            assert!((&a.x - &b.x).amax() <= 1e-9 * (1.0 + b.x.amax()), "{f} at t = {}", a.t);
            assert!((a.p_t - b.p_t).abs() <= 1e-9);
        }
    }
    let err = integrate(&dirac, Formulation::HamiltonDirac, lifted.nodes[0].clone(), 1e-3, 1, &StepOptions::default()).unwrap_err();
    assert!(matches!(err, DiracError::Inadmissible(_)));
}

#[test]
fn piston_monitors_stay_small() {
    let (sys, traj) = piston_run(1e-3, 300);
    let lifted = lift_reduced(&sys, &traj).unwrap();
    let parts = ThermoDirac::new(&sys);
    let reports = monitor_invariants(&parts.lagrangian, &parts.constraints, Some(&parts.force), Some(&parts.entropy), &lifted).unwrap();
    for r in &reports {
        assert!(r.covariant_energy.abs() <= 1e-9);
        assert!(r.entropy_decomposition_residual <= 1e-10);
        assert!(r.entropy_production >= 0.0);
        assert!(r.dirac_residual <= 1e-8);
        assert!(r.kinematic_residual.amax() <= 1e-9);
    }
}

#[test]
fn closed_limit_is_plain_mechanics() {
    let cfg = PistonConfig { friction: 0.0, inlet_flow: 0.0, outlet_flow: 0.0, conductance: 0.0, ..PistonConfig::default() };
    let sys = cfg.system().unwrap();
    assert!(sys.ports.is_empty() && sys.sources.is_empty());
    let init = cfg.initial_state(&sys, dvector![0.1, -0.05], dvector![0.0, 0.3], 300.0, 0.01);
    let traj = integrate_reduced(&sys, init.clone(), 1e-2, 200, NewtonOptions::default()).unwrap();
    let l = ParticleLagrangian { mass: dvector![1.0, 1.0], potential: Potential { stiffness: 4.0, ..Potential::free() } };
    let start = crate::dynamics::initial_state(&l, 0.0, init.q.clone(), init.v_q.clone()).unwrap();
    let reference = integrate(
        &crate::dynamics::DiracSystem::new(&l, &Unconstrained { n: 2 }),
        Formulation::Pontryagin,
        start,
        1e-2,
        200,
        &StepOptions::default(),
    )
    .unwrap();
    for (a, b) in traj.nodes.iter().zip(&reference.nodes) {
        assert!((&a.q - &b.x).amax() <= 1e-10);
        assert!((&a.v_q - &b.v).amax() <= 1e-10);
        assert!((a.s - init.s).abs() <= 1e-12 && (a.n - init.n).abs() <= 1e-12);
    }
}

#[test]
fn reduced_integrator_rejects_bad_step() {
    let cfg = PistonConfig::default();
    let sys = cfg.system().unwrap();
    let init = cfg.initial_state(&sys, dvector![0.0, 0.0], dvector![0.0, 0.0], 300.0, 0.01);
    assert!(matches!(integrate_reduced(&sys, init, -1.0, 3, NewtonOptions::default()), Err(DiracError::InvalidParameter(_))));
}
