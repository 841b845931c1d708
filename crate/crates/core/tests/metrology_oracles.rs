//! Closed forms for the undriven, linear case `H = B_z S_z`.

use std::f64::consts::PI;

use bjmetro::metrology::{error_propagation, fidelity, qfi_of};
use bjmetro::propagation::{derivative_state, final_state, DerivativeOptions, EvolutionOptions, ModelParams, PropagatorCache};
use bjmetro::scans::{evaluate_point, Output, Seed, SweepOptions};
use bjmetro::spin::{build_spin_system, coherent_state};
use proptest::prelude::*;

fn rotation(n: usize, bz: f64) -> ModelParams {
    ModelParams::new(n, 0.0, bz, 0.0)
}

#[test]
fn equatorial_qfi_is_n_t_squared() {
    let cache = PropagatorCache::new();
    let params = rotation(50, PI / 2.0);
    let psi0 = coherent_state(&bjmetro::spin::SpinSystem::new(50).unwrap(), PI / 2.0, 0.0).unwrap();
    let d = derivative_state(&params, &psi0, 4, 1e-5, &DerivativeOptions::default(), &cache).unwrap();
    let q = qfi_of(&d).unwrap();
    let expected = 50.0 * 16.0;
    assert!((q.value / expected - 1.0).abs() < 1e-3, "QFI {}", q.value);
    assert!(q.richardson_ok);
}

#[test]
fn ramsey_readout_reaches_the_standard_quantum_limit() {
    // Along S_x the uncertainty is 1 / (sqrt(N) t) at any B_z with sin(B_z t) != 0.
    let cache = PropagatorCache::new();
    for (n, periods) in [(50usize, 4u64), (80, 3)] {
        let params = rotation(n, 0.3);
        let (sys, ops) = build_spin_system(n).unwrap();
        let psi0 = coherent_state(&sys, PI / 2.0, 0.0).unwrap();
        let d = derivative_state(&params, &psi0, periods, 1e-5, &DerivativeOptions::default(), &cache).unwrap();
        let ep = error_propagation(&ops.sx, &d.psi_plus, &d.psi_minus, &d.psi_f, d.epsilon).unwrap();
        let t = periods as f64;
        let expected = 1.0 / ((n as f64).sqrt() * t);
        assert!((ep.delta_bz / expected - 1.0).abs() < 1e-2, "N={n}: {} vs {expected}", ep.delta_bz);
        // The same states saturate the QFI bound 1 / sqrt(F_Q).
        let q = qfi_of(&d).unwrap().value;
        assert!((ep.delta_bz * q.sqrt() - 1.0).abs() < 1e-2);
    }
}

#[test]
fn z_readout_is_blind_to_z_rotation() {
    let cache = PropagatorCache::new();
    let (sys, ops) = build_spin_system(20).unwrap();
    let psi0 = coherent_state(&sys, 1.1, 0.4).unwrap();
    let d = derivative_state(&rotation(20, 0.3), &psi0, 2, 1e-5, &DerivativeOptions::default(), &cache).unwrap();
    let ep = error_propagation(&ops.sz, &d.psi_plus, &d.psi_minus, &d.psi_f, d.epsilon).unwrap();
    // Round-off leaves a slope of order 1e-9, so "blind" means enormous, if finite.
    assert!(ep.delta_bz > 1e6, "{}", ep.delta_bz);
}

#[test]
fn return_fidelity_follows_the_binomial_closed_form() {
    let cache = PropagatorCache::new();
    let n = 20;
    let sys = bjmetro::spin::SpinSystem::new(n).unwrap();
    let psi0 = coherent_state(&sys, PI / 2.0, 0.0).unwrap();
    for (bz, periods) in [(0.3, 1u64), (0.3, 5), (1.1, 3)] {
        let (psi, _) = final_state(&rotation(n, bz), &psi0, periods, &EvolutionOptions::default(), &cache).unwrap();
        let expected = ((1.0 + (bz * periods as f64).cos()) / 2.0).powi(n as i32);
        assert!((fidelity(&psi0, &psi).unwrap() - expected).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn qfi_quadruples_when_time_doubles(n in 2usize..60, theta in 0.2..(PI - 0.2), phi in 0.0..(2.0 * PI), periods in 1u64..8) {
        let cache = PropagatorCache::new();
        let params = rotation(n, 0.7);
        let opts = SweepOptions::default();
        let seed = Seed::new(theta, phi);
        let q1 = evaluate_point(&params, seed, periods, &[Output::Qfi], &opts, &cache).unwrap().qfi.unwrap();
        let q2 = evaluate_point(&params, seed, 2 * periods, &[Output::Qfi], &opts, &cache).unwrap().qfi.unwrap();
        prop_assert!((q2 / q1 - 4.0).abs() < 4e-3, "{q1} -> {q2}");
        let t = periods as f64;
        prop_assert!((q1 / (n as f64 * t * t * theta.sin().powi(2)) - 1.0).abs() < 1e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn fisher_information_never_exceeds_qfi(
        chi in 0.0..20.0f64,
        bz in 0.0..3.0f64,
        bx in 0.0..6.0f64,
        theta in 0.0..PI,
        phi in 0.0..(2.0 * PI),
        periods in 1u64..6,
    ) {
        let cache = PropagatorCache::new();
        let params = ModelParams::new(40, chi, bz, bx);
        let outputs = [Output::Qfi, Output::FiX, Output::FiY, Output::FiZ];
        let r = evaluate_point(&params, Seed::new(theta, phi), periods, &outputs, &SweepOptions::default(), &cache).unwrap();
        let q = r.qfi.unwrap();
        for fi in r.fi.iter().flatten() {
            prop_assert!(*fi <= q * (1.0 + 1e-6) + 1e-9, "FI {fi} > QFI {q}");
        }
    }
}
