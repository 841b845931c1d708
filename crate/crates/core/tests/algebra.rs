use std::f64::consts::PI;

use bjmetro::metrology::{fidelity, husimi_default, linear_entropy};
use bjmetro::spin::{build_spin_system, coherent_state, expectation, StateVector};
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn random_state(re: &[f64], im: &[f64]) -> StateVector {
    let v: Array1<C64> = re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect();
    StateVector::normalized(v).unwrap()
}

/// Amplitude vectors of length `n + 1` with at least one sizeable entry.
fn amplitudes(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1..=max_n).prop_flat_map(|n| {
        (Just(n), prop::collection::vec(-1.0..1.0f64, n + 1), prop::collection::vec(-1.0..1.0f64, n + 1))
            .prop_filter("non-negligible norm", |(_, re, im)| re.iter().chain(im).any(|v| v.abs() > 0.1))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn commutators_and_casimir(n in 1usize..60) {
        let (_, ops) = build_spin_system(n).unwrap();
        let i = C64::new(0.0, 1.0);
        let comm = |a: &Array2<C64>, b: &Array2<C64>| a.dot(b) - b.dot(a);
        prop_assert!(max_abs(&(comm(&ops.sx, &ops.sy) - ops.sz.mapv(|v| v * i))) < 1e-10);
        prop_assert!(max_abs(&(comm(&ops.sy, &ops.sz) - ops.sx.mapv(|v| v * i))) < 1e-10);
        prop_assert!(max_abs(&(comm(&ops.sz, &ops.sx) - ops.sy.mapv(|v| v * i))) < 1e-10);
        let j = n as f64 / 2.0;
        let casimir = ops.sx.dot(&ops.sx) + ops.sy.dot(&ops.sy) + &ops.sz2;
        let target = Array2::<C64>::eye(n + 1).mapv(|v| v * j * (j + 1.0));
        prop_assert!(max_abs(&(casimir - target)) < 1e-10 * (1.0 + j * j));
        prop_assert!(max_abs(&(ops.sz.dot(&ops.sz) - &ops.sz2)) < 1e-12 * (1.0 + j * j));
    }

    #[test]
    fn coherent_state_norm_and_moments(n in 1usize..200, theta in 0.0..PI, phi in 0.0..(2.0 * PI)) {
        let (sys, ops) = build_spin_system(n).unwrap();
        let psi = coherent_state(&sys, theta, phi).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        let j = n as f64 / 2.0;
        let (st, ct) = theta.sin_cos();
        let tol = 1e-10 * j.max(1.0);
        prop_assert!((expectation(&psi, &ops.sx).unwrap() - j * st * phi.cos()).abs() < tol);
        prop_assert!((expectation(&psi, &ops.sy).unwrap() - j * st * phi.sin()).abs() < tol);
        prop_assert!((expectation(&psi, &ops.sz).unwrap() - j * ct).abs() < tol);
        // Var(S_z) = J/2 sin^2(theta) for a coherent state.
        let var = expectation(&psi, &ops.sz2).unwrap() - (j * ct).powi(2);
        prop_assert!((var - 0.5 * j * st * st).abs() < 1e-9 * j.max(1.0) * j.max(1.0));
        prop_assert!(linear_entropy(&psi, &ops).unwrap() < 1e-12);
    }

    #[test]
    fn linear_entropy_is_bounded((n, re, im) in amplitudes(40)) {
        let (_, ops) = build_spin_system(n).unwrap();
        let s = linear_entropy(&random_state(&re, &im), &ops).unwrap();
        prop_assert!((0.0..=0.5).contains(&s));
    }

    #[test]
    fn fidelity_is_bounded((n, re, im) in amplitudes(40), theta in 0.0..PI, phi in 0.0..(2.0 * PI)) {
        let (sys, _) = build_spin_system(n).unwrap();
        let psi = random_state(&re, &im);
        let scs = coherent_state(&sys, theta, phi).unwrap();
        let f = fidelity(&scs, &psi).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        prop_assert!((fidelity(&psi, &psi).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((f - fidelity(&psi, &scs).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn husimi_is_a_normalized_density((_, re, im) in amplitudes(30)) {
        let q = husimi_default(&random_state(&re, &im)).unwrap();
        prop_assert!((q.normalization() - 1.0).abs() < 1e-3, "normalization {}", q.normalization());
        prop_assert!(q.values.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn dicke_extremes_have_maximal_entropy_or_none() {
    let (_, ops) = build_spin_system(10).unwrap();
    let top = StateVector::basis(11, 0).unwrap();
    let middle = StateVector::basis(11, 5).unwrap();
    assert!(linear_entropy(&top, &ops).unwrap() < 1e-15);
    assert!((linear_entropy(&middle, &ops).unwrap() - 0.5).abs() < 1e-15);
}
