//! Figures of merit evaluated on final states.

use std::f64::consts::{PI, TAU};

use log::warn;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::DerivativeState;
use crate::spin::{self, coherent_state, expectation, Axis, SpinOperators, StateVector};

/// Probabilities below this are dropped from the Fisher-information sum.
pub const DEFAULT_PROBABILITY_FLOOR: f64 = 1e-12;
/// Excluded outcomes whose squared derivative exceeds this raise a flag.
pub const EXCLUSION_FLAG_THRESHOLD: f64 = 1e-10;
/// Slopes below this make the error-propagation estimate infinite.
pub const INSENSITIVE_SLOPE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfiResult {
    pub value: f64,
    /// Finite-difference step behind `dpsi`; zero when not known.
    pub epsilon_used: f64,
    pub richardson_ok: bool,
}

/// `4 (<dpsi|dpsi> - |<dpsi|psi>|^2)`.
pub fn qfi(psi_f: &StateVector, dpsi: &Array1<C64>) -> Result<QfiResult> {
    if dpsi.len() != psi_f.dim() {
        return Err(Error::DimensionMismatch { expected: psi_f.dim(), found: dpsi.len() });
    }
    let norm2: f64 = dpsi.iter().map(|v| v.norm_sqr()).sum();
    let overlap = spin::inner(dpsi, psi_f.amplitudes())?;
    let raw = 4.0 * (norm2 - overlap.norm_sqr());
    let value = if raw >= 0.0 {
        raw
    } else if raw >= -1e-6 {
        if raw < -1e-9 {
            warn!("QFI {raw:.3e} slightly negative; clipped to zero");
        }
        0.0
    } else {
        return Err(Error::NegativeQfi { value: raw });
    };
    debug_assert!(value >= 0.0);
    Ok(QfiResult { value, epsilon_used: 0.0, richardson_ok: true })
}

/// QFI of a central-difference derivative, carrying its step and Richardson verdict.
pub fn qfi_of(derivative: &DerivativeState) -> Result<QfiResult> {
    let mut result = qfi(&derivative.psi_f, &derivative.dpsi)?;
    result.epsilon_used = derivative.epsilon;
    result.richardson_ok = derivative.richardson.as_ref().map_or(true, |r| r.passed);
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiResult {
    pub axis: Axis,
    pub value: f64,
    pub floor_used: f64,
    /// Some excluded outcome had a non-negligible derivative.
    pub flagged: bool,
}

/// Classical Fisher information of a projective `S_axis` measurement.
///
/// `psi_plus` and `psi_minus` are final states at `B_z +/- epsilon`.
pub fn fisher_information(
    axis: Axis,
    psi_plus: &StateVector,
    psi_minus: &StateVector,
    epsilon: f64,
    floor: f64,
) -> Result<FiResult> {
    if psi_plus.dim() != psi_minus.dim() {
        return Err(Error::DimensionMismatch { expected: psi_plus.dim(), found: psi_minus.dim() });
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    let basis = spin::measurement_basis_for(psi_plus.dim() - 1, axis)?;
    let p_plus = basis.probabilities(psi_plus)?;
    let p_minus = basis.probabilities(psi_minus)?;
    let mut value = 0.0;
    let mut flagged = false;
    for (pp, pm) in p_plus.iter().zip(p_minus.iter()) {
        let p = 0.5 * (pp + pm);
        let dp = (pp - pm) / (2.0 * epsilon);
        if p >= floor {
            value += dp * dp / p;
        } else if dp * dp > EXCLUSION_FLAG_THRESHOLD {
            flagged = true;
        }
    }
    if flagged {
        warn!("Fisher information along {axis}: excluded outcome with significant derivative");
    }
    debug_assert!(value >= 0.0);
    Ok(FiResult { axis, value, floor_used: floor, flagged })
}

/// `1/2 (1 - |<S>|^2 / J^2)`.
pub fn linear_entropy(state: &StateVector, ops: &SpinOperators) -> Result<f64> {
    if state.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: state.dim() });
    }
    let j = ops.j();
    let mut sum = 0.0;
    for axis in Axis::ALL {
        let m = expectation(state, ops.get(axis))?;
        sum += m * m;
    }
    let value = (0.5 * (1.0 - sum / (j * j))).clamp(0.0, 0.5);
    Ok(value)
}

/// `|<psi0|psi_n>|^2`.
pub fn fidelity(psi0: &StateVector, psi_n: &StateVector) -> Result<f64> {
    let value = psi0.inner(psi_n)?.norm_sqr().min(1.0);
    debug_assert!((0.0..=1.0).contains(&value));
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPropagation {
    /// `Delta O / |d<O>/dB_z|`; infinite at insensitive points.
    pub delta_bz: f64,
    pub mean: f64,
    pub variance: f64,
    pub slope: f64,
}

/// Error-propagation uncertainty of `B_z` from measuring `observable`.
pub fn error_propagation(
    observable: &Array2<C64>,
    psi_plus: &StateVector,
    psi_minus: &StateVector,
    psi_mid: &StateVector,
    epsilon: f64,
) -> Result<ErrorPropagation> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    let mean = expectation(psi_mid, observable)?;
    let square = observable.dot(observable);
    let raw_var = expectation(psi_mid, &square)? - mean * mean;
    if raw_var < -1e-10 * mean.abs().max(1.0) {
        return Err(Error::Numerical(format!("negative variance {raw_var:.3e}")));
    }
    let variance = raw_var.max(0.0);
    let slope = (expectation(psi_plus, observable)? - expectation(psi_minus, observable)?) / (2.0 * epsilon);
    let delta_bz = if slope.abs() < INSENSITIVE_SLOPE {
        f64::INFINITY
    } else {
        variance.sqrt() / slope.abs()
    };
    Ok(ErrorPropagation { delta_bz, mean, variance, slope })
}

/// Polar and azimuthal sample points covering the sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
}

impl AngularGrid {
    /// `n_theta` points on `[0, pi]` (both ends) and `n_phi` on `[0, 2 pi)`.
    pub fn uniform(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 1 {
            return Err(Error::invalid("grid", "needs at least 2 polar and 1 azimuthal points"));
        }
        let thetas = (0..n_theta).map(|i| PI * i as f64 / (n_theta - 1) as f64).collect();
        let phis = (0..n_phi).map(|j| TAU * j as f64 / n_phi as f64).collect();
        Ok(Self { thetas, phis })
    }

    /// Explicit axes; every angle must lie in `[0, pi] x [0, 2 pi)`.
    pub fn new(thetas: Vec<f64>, phis: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() || phis.is_empty() {
            return Err(Error::invalid("grid", "axes must be non-empty"));
        }
        if thetas.iter().any(|t| !(0.0..=PI).contains(t)) {
            return Err(Error::invalid("theta", "must lie in [0, pi]"));
        }
        if phis.iter().any(|p| !(0.0..TAU).contains(p)) {
            return Err(Error::invalid("phi", "must lie in [0, 2 pi)"));
        }
        Ok(Self { thetas, phis })
    }

    pub fn len(&self) -> usize {
        self.thetas.len() * self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Default Husimi resolution.
pub const HUSIMI_GRID: (usize, usize) = (181, 361);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HusimiGrid {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// `values[[i, j]]` at `(thetas[i], phis[j])`.
    pub values: Array2<f64>,
}

impl HusimiGrid {
    /// `int Q sin(theta) dtheta dphi` by the trapezoid rule (periodic in phi).
    pub fn normalization(&self) -> f64 {
        let tw = trapezoid_weights(&self.thetas);
        let pw = periodic_weights(&self.phis);
        let mut total = 0.0;
        for (i, theta) in self.thetas.iter().enumerate() {
            let row: f64 = self.values.row(i).iter().zip(&pw).map(|(q, w)| q * w).sum();
            total += tw[i] * theta.sin() * row;
        }
        total
    }
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

fn periodic_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![TAU];
    }
    (0..n)
        .map(|i| {
            let next = if i + 1 < n { x[i + 1] } else { x[0] + TAU };
            let prev = if i > 0 { x[i - 1] } else { x[n - 1] - TAU };
            0.5 * (next - prev)
        })
        .collect()
}

/// `Q(theta, phi) = (2J+1)/(4 pi) |<theta, phi|psi>|^2` on `grid`.
pub fn husimi_q(state: &StateVector, grid: &AngularGrid) -> Result<HusimiGrid> {
    let system = state.system()?;
    let n = system.n_atoms();
    let prefactor = (n as f64 + 1.0) / (4.0 * PI);
    let rotors: Vec<C64> = grid.phis.iter().map(|p| C64::from_polar(1.0, -p)).collect();
    let mut values = Array2::zeros((grid.thetas.len(), grid.phis.len()));
    for (i, &theta) in grid.thetas.iter().enumerate() {
        // Real, non-negative amplitudes of SCS(theta, 0).
        let weights = coherent_state(&system, theta, 0.0)?;
        let coeffs: Vec<C64> = weights
            .amplitudes()
            .iter()
            .zip(state.amplitudes())
            .map(|(w, a)| w.re * a)
            .collect();
        for (j, z) in rotors.iter().enumerate() {
            let overlap = coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c);
            values[[i, j]] = prefactor * overlap.norm_sqr();
        }
    }
    Ok(HusimiGrid { thetas: grid.thetas.clone(), phis: grid.phis.clone(), values })
}

/// Husimi distribution on the default grid.
pub fn husimi_default(state: &StateVector) -> Result<HusimiGrid> {
    husimi_q(state, &AngularGrid::uniform(HUSIMI_GRID.0, HUSIMI_GRID.1)?)
}

/// Mean spin direction `(theta, phi)` of a state; `phi` in `[0, 2 pi)`.
pub fn mean_spin_angles(state: &StateVector, ops: &SpinOperators) -> Result<(f64, f64)> {
    let x = expectation(state, &ops.sx)?;
    let y = expectation(state, &ops.sy)?;
    let z = expectation(state, &ops.sz)?;
    let r = (x * x + y * y + z * z).sqrt();
    if r == 0.0 {
        return Ok((0.0, 0.0));
    }
    let theta = (z / r).clamp(-1.0, 1.0).acos();
    Ok((theta, y.atan2(x).rem_euclid(TAU)))
}
