use std::f64::consts::PI;

use bjmetro::meanfield::{bloch_to_classical, classical_to_bloch, integrate, poincare_section, seed_grid};
use bjmetro::metrology::{mean_spin_angles, AngularGrid};
use bjmetro::propagation::{final_state, EvolutionOptions, ModelParams, PropagatorCache, Strategy};
use bjmetro::scans::{chaos_fraction, evaluate_point, phase_map, ChaosClassifier, Output, PhaseQuantity, Seed, SweepOptions};
use bjmetro::spin::build_spin_system;

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[test]
fn mean_spin_follows_the_classical_trajectory_at_large_n() {
    // Before the wave packet spreads, <S>/J tracks the mean-field flow.
    let params = ModelParams::new(1000, 10.0, PI / 2.0, 1.5);
    let (theta0, phi0) = (2.0, 1.0);
    let (sys, ops) = build_spin_system(1000).unwrap();
    let psi0 = bjmetro::spin::coherent_state(&sys, theta0, phi0).unwrap();
    let opts = EvolutionOptions { strategy: Strategy::Direct, ..EvolutionOptions::default() };
    let (psi, _) = final_state(&params, &psi0, 1, &opts, &PropagatorCache::new()).unwrap();
    let (theta_q, phi_q) = mean_spin_angles(&psi, &ops).unwrap();
    let traj = integrate(bloch_to_classical(theta0, phi0), &params, 1.0, 1e-3).unwrap();
    let (theta_c, phi_c) = classical_to_bloch(*traj.states.last().unwrap());
    assert!((theta_q - theta_c).abs() < 0.02, "theta {theta_q} vs {theta_c}");
    assert!(angle_gap(phi_q, phi_c) < 0.02, "phi {phi_q} vs {phi_c}");
}

#[test]
fn chaos_grows_with_drive_amplitude() {
    let seeds = seed_grid(8, 8, 0.98).unwrap();
    let classifier = ChaosClassifier::default();
    let fractions: Vec<f64> = [0.0, 5.5]
        .iter()
        .map(|&bx| chaos_fraction(&poincare_section(&seeds, &ModelParams::new(1, 10.0, PI / 2.0, bx), 500, 200).unwrap(), &classifier))
        .collect();
    assert_eq!(fractions[0], 0.0);
    assert!(fractions[1] > 0.5, "{fractions:?}");
}

#[test]
fn repeated_evaluation_is_bitwise_identical() {
    let params = ModelParams::new(30, 10.0, PI / 2.0, 1.5);
    let outputs = [Output::Qfi, Output::FiX, Output::DeltaBz];
    let run = || evaluate_point(&params, Seed::new(2.0, 1.0), 7, &outputs, &SweepOptions::default(), &PropagatorCache::new()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.qfi.unwrap().to_bits(), b.qfi.unwrap().to_bits());
    assert_eq!(a.fi[0].unwrap().to_bits(), b.fi[0].unwrap().to_bits());
    assert_eq!(a.delta_bz.unwrap().to_bits(), b.delta_bz.unwrap().to_bits());
}

#[test]
fn phase_maps_do_not_depend_on_worker_count() {
    let params = ModelParams::new(16, 10.0, PI / 2.0, 1.5);
    let grid = AngularGrid::uniform(6, 7).unwrap();
    let map = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            [PhaseQuantity::Entropy, PhaseQuantity::Qfi]
                .map(|q| phase_map(q, &grid, &params, 32, &SweepOptions::default(), &PropagatorCache::new()).unwrap())
        })
    };
    let (one, four) = (map(1), map(4));
    for (a, b) in one.iter().zip(&four) {
        assert!(a.values.iter().zip(b.values.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
