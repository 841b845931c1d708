use std::f64::consts::PI;

use bjmetro::propagation::{period_propagator, Method, ModelParams};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn max_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn split_step_agrees_with_exact_step(
        n in 1usize..=12,
        chi in 0.0..20.0f64,
        bz in 0.0..PI,
        bx in 0.0..6.0f64,
    ) {
        let params = ModelParams::new(n, chi, bz, bx);
        let split = period_propagator(&params, 1000, Method::SplitStep).unwrap();
        let exact = period_propagator(&params, 8000, Method::ExactStep).unwrap();
        let d = max_diff(&split.u, &exact.u);
        prop_assert!(d < 1e-6, "max |dU| = {d:e}");
        prop_assert!(split.unitarity_defect() < 1e-10);
    }

    #[test]
    fn undriven_period_is_the_closed_form_phase(
        n in 1usize..=40,
        chi in -20.0..20.0f64,
        bz in -PI..PI,
        omega in 1.0..10.0f64,
    ) {
        let params = ModelParams::new(n, chi, bz, 0.0).with_omega(omega);
        let u = period_propagator(&params, 50, Method::SplitStep).unwrap();
        let t = params.period();
        let j = n as f64 / 2.0;
        let mut expected = Array2::<C64>::zeros((n + 1, n + 1));
        for k in 0..=n {
            let m = j - k as f64;
            expected[[k, k]] = C64::from_polar(1.0, -(chi / n as f64 * m * m + bz * m) * t);
        }
        prop_assert!(max_diff(&u.u, &expected) < 1e-12);
    }
}

#[test]
fn unitarity_holds_at_one_hundred_atoms() {
    let params = ModelParams::new(100, 10.0, PI / 2.0, 5.5);
    let u = period_propagator(&params, 1000, Method::SplitStep).unwrap();
    let defect = u.unitarity_defect();
    assert!(defect < 1e-9, "defect {defect:e}");
}
