//! Collective spin-J algebra in the Dicke basis.
//!
//! Basis vectors are ordered by descending magnetic quantum number, so index
//! `k` holds `m_z = J - k` and index 0 is the fully polarized state `|J, J>`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array1, Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest particle number accepted by [`build_spin_system`].
pub const DEFAULT_MAX_ATOMS: usize = 2500;

/// Accepted deviation of a state's norm from one.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// `N` two-mode bosons viewed as a spin of length `J = N/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinSystem {
    n_atoms: usize,
}

impl SpinSystem {
    pub fn new(n_atoms: usize) -> Result<Self> {
        Self::with_limit(n_atoms, DEFAULT_MAX_ATOMS)
    }

    pub fn with_limit(n_atoms: usize, max_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::invalid("n_atoms", "at least one particle is required"));
        }
        if n_atoms > max_atoms {
            return Err(Error::invalid(
                "n_atoms",
                format!("{n_atoms} exceeds the configured maximum of {max_atoms}"),
            ));
        }
        Ok(Self { n_atoms })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Pseudospin length `N/2`; half-integer for odd `N`.
    pub fn j(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.n_atoms + 1
    }

    /// Magnetic quantum numbers in basis order, `J, J-1, ..., -J`.
    pub fn m_values(&self) -> Array1<f64> {
        let j = self.j();
        Array1::from_iter((0..self.dim()).map(|k| j - k as f64))
    }
}

/// Dense matrices of the collective spin operators.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub system: SpinSystem,
    pub sx: Array2<C64>,
    pub sy: Array2<C64>,
    pub sz: Array2<C64>,
    pub sz2: Array2<C64>,
}

impl SpinOperators {
    pub fn j(&self) -> f64 {
        self.system.j()
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn get(&self, axis: Axis) -> &Array2<C64> {
        match axis {
            Axis::X => &self.sx,
            Axis::Y => &self.sy,
            Axis::Z => &self.sz,
        }
    }
}

/// Builds the spin system and its operator matrices for `n_atoms` particles.
pub fn build_spin_system(n_atoms: usize) -> Result<(SpinSystem, SpinOperators)> {
    build_spin_system_with_limit(n_atoms, DEFAULT_MAX_ATOMS)
}

pub fn build_spin_system_with_limit(
    n_atoms: usize,
    max_atoms: usize,
) -> Result<(SpinSystem, SpinOperators)> {
    let system = SpinSystem::with_limit(n_atoms, max_atoms)?;
    let dim = system.dim();
    let j = system.j();
    let m = system.m_values();

    // S+ |J,m> = sqrt(J(J+1) - m(m+1)) |J,m+1>; m+1 sits one index lower.
    let mut splus = Array2::<f64>::zeros((dim, dim));
    for k in 1..dim {
        let mk = m[k];
        splus[[k - 1, k]] = (j * (j + 1.0) - mk * (mk + 1.0)).sqrt();
    }
    let half = C64::new(0.5, 0.0);
    let minus_half_i = C64::new(0.0, -0.5);
    let sx = Array2::from_shape_fn((dim, dim), |(r, c)| half * (splus[[r, c]] + splus[[c, r]]));
    let sy = Array2::from_shape_fn((dim, dim), |(r, c)| {
        minus_half_i * (splus[[r, c]] - splus[[c, r]])
    });
    let sz = Array2::from_diag(&m.mapv(|v| C64::new(v, 0.0)));
    let sz2 = Array2::from_diag(&m.mapv(|v| C64::new(v * v, 0.0)));

    Ok((system, SpinOperators { system, sx, sy, sz, sz2 }))
}

/// Unit-norm amplitude vector over the Dicke basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(Array1<C64>);

impl StateVector {
    /// Wraps `amplitudes`, rejecting vectors whose norm is not one.
    pub fn new(amplitudes: Array1<C64>) -> Result<Self> {
        let norm = l2_norm(&amplitudes);
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::invalid("state", format!("norm {norm} is not 1")));
        }
        Ok(Self(amplitudes))
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(mut amplitudes: Array1<C64>) -> Result<Self> {
        let norm = l2_norm(&amplitudes);
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::invalid("state", "cannot normalize a zero or non-finite vector"));
        }
        amplitudes.mapv_inplace(|a| a / norm);
        Ok(Self(amplitudes))
    }

    /// The Dicke state `|J, m_z>` with `m_z = J - index`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::DimensionMismatch { expected: dim, found: index + 1 });
        }
        let mut v = Array1::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(Self(v))
    }

    pub(crate) fn from_raw(amplitudes: Array1<C64>) -> Self {
        Self(amplitudes)
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<C64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        inner(&self.0, &other.0)
    }

    /// Spin system matching this state's dimension.
    pub fn system(&self) -> Result<SpinSystem> {
        SpinSystem::with_limit(self.dim().saturating_sub(1), usize::MAX)
    }
}

pub(crate) fn l2_norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// `<a|b>` for raw amplitude vectors.
pub(crate) fn inner(a: &Array1<C64>, b: &Array1<C64>) -> Result<C64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
}

/// `ln(k!)` for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    table.push(acc);
    for k in 1..=n {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Spin coherent state `|J, theta, phi>`.
///
/// The amplitude on `m_z` is
/// `sqrt(C(2J, J-m)) sin(theta/2)^(J-m) cos(theta/2)^(J+m) exp(i (J-m) phi)`.
/// Binomials are evaluated through log-factorials so that `N` in the
/// thousands neither overflows nor underflows before exponentiation.
pub fn coherent_state(system: &SpinSystem, theta: f64, phi: f64) -> Result<StateVector> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::invalid("theta", format!("{theta} is outside [0, pi]")));
    }
    if !(0.0..std::f64::consts::TAU).contains(&phi) {
        return Err(Error::invalid("phi", format!("{phi} is outside [0, 2pi)")));
    }
    let n = system.n_atoms();
    let lnf = ln_factorials(n);
    // cos(pi/2) is not exactly zero in floating point; pin the south pole.
    let (s, c) = if theta == std::f64::consts::PI { (1.0, 0.0) } else { ((theta / 2.0).sin(), (theta / 2.0).cos()) };
    let (ln_s, ln_c) = (s.ln(), c.ln());

    let amplitudes = Array1::from_iter((0..=n).map(|k| {
        // k = J - m_z, so the cos exponent J + m_z is n - k.
        let magnitude = if s == 0.0 {
            if k == 0 { 1.0 } else { 0.0 }
        } else if c == 0.0 {
            if k == n { 1.0 } else { 0.0 }
        } else {
            let ln_binom = lnf[n] - lnf[k] - lnf[n - k];
            (0.5 * ln_binom + k as f64 * ln_s + (n - k) as f64 * ln_c).exp()
        };
        C64::from_polar(magnitude, k as f64 * phi)
    }));
    StateVector::normalized(amplitudes)
}

/// `<psi|op|psi>` for a Hermitian `op`.
pub fn expectation(state: &StateVector, op: &Array2<C64>) -> Result<f64> {
    let psi = state.amplitudes();
    if op.nrows() != psi.len() || op.ncols() != psi.len() {
        return Err(Error::DimensionMismatch { expected: psi.len(), found: op.nrows() });
    }
    let value = inner(psi, &op.dot(psi))?;
    if value.im.abs() > 1e-10 * value.re.abs().max(1.0) {
        return Err(Error::NonHermitian { residue: value.im });
    }
    Ok(value.re)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn name(&self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::invalid("axis", format!("unknown axis `{other}`"))),
        }
    }
}

/// Eigenbasis of `S_axis`: column `k` of `vectors` is the eigenvector with
/// eigenvalue `eigenvalues[k]`, sorted ascending from `-J` to `J`.
#[derive(Clone, Debug)]
pub struct BasisTransform {
    pub axis: Axis,
    pub vectors: Array2<C64>,
    pub eigenvalues: Array1<f64>,
}

impl BasisTransform {
    /// Outcome probabilities `|<J, m_axis|psi>|^2`, ordered like `eigenvalues`.
    pub fn probabilities(&self, state: &StateVector) -> Result<Array1<f64>> {
        let psi = state.amplitudes();
        if psi.len() != self.vectors.nrows() {
            return Err(Error::DimensionMismatch { expected: self.vectors.nrows(), found: psi.len() });
        }
        if self.axis == Axis::Z {
            // Ascending m_z is the reversed basis order.
            return Ok(psi.iter().rev().map(|a| a.norm_sqr()).collect());
        }
        let coeffs = self.vectors.t().mapv(|v| v.conj()).dot(psi);
        Ok(coeffs.mapv(|c| c.norm_sqr()))
    }
}

type BasisKey = (usize, Axis);

fn basis_cache() -> &'static Mutex<HashMap<BasisKey, Arc<BasisTransform>>> {
    static CACHE: OnceLock<Mutex<HashMap<BasisKey, Arc<BasisTransform>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Measurement eigenbasis for `S_axis`, computed once per `(N, axis)`.
pub fn measurement_basis(ops: &SpinOperators, axis: Axis) -> Result<Arc<BasisTransform>> {
    let key = (ops.system.n_atoms(), axis);
    if let Some(hit) = basis_cache().lock().expect("basis cache poisoned").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let transform = Arc::new(compute_basis(ops, axis)?);
    let mut cache = basis_cache().lock().expect("basis cache poisoned");
    // A concurrent builder may have won the race; keep the first entry.
    Ok(Arc::clone(cache.entry(key).or_insert(transform)))
}

/// Like [`measurement_basis`], building the operators when needed.
pub fn measurement_basis_for(n_atoms: usize, axis: Axis) -> Result<Arc<BasisTransform>> {
    let key = (n_atoms, axis);
    if let Some(hit) = basis_cache().lock().expect("basis cache poisoned").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let (_, ops) = build_spin_system(n_atoms)?;
    measurement_basis(&ops, axis)
}

fn compute_basis(ops: &SpinOperators, axis: Axis) -> Result<BasisTransform> {
    let dim = ops.dim();
    if axis == Axis::Z {
        let j = ops.j();
        let eigenvalues = Array1::from_iter((0..dim).map(|k| -j + k as f64));
        let vectors = Array2::from_shape_fn((dim, dim), |(r, c)| {
            if r + c == dim - 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        });
        return Ok(BasisTransform { axis, vectors, eigenvalues });
    }
    let (values, vectors) = hermitian_eigh(ops.get(axis))?;
    let (eigenvalues, vectors) = sort_and_fix_phases(values, vectors);
    Ok(BasisTransform { axis, vectors, eigenvalues })
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
///
/// LAPACK reads a row-major buffer as the transpose, which for a complex
/// Hermitian matrix is its conjugate; copying into column-major order keeps
/// the eigenvectors those of `a` itself.
pub(crate) fn hermitian_eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let mut f = Array2::zeros(a.raw_dim().f());
    f.assign(a);
    f.eigh(UPLO::Lower).map_err(|e| Error::Eigensolver(e.to_string()))
}

/// Sorts eigenpairs ascending and rotates every eigenvector so that its
/// largest-magnitude component (first one on ties) is real and positive.
pub(crate) fn sort_and_fix_phases(
    values: Array1<f64>,
    vectors: Array2<C64>,
) -> (Array1<f64>, Array2<C64>) {
    let dim = values.len();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut sorted = Array2::zeros(vectors.raw_dim());
    for (dst, &src) in order.iter().enumerate() {
        let column = vectors.column(src);
        let max = column.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let pivot = column
            .iter()
            .position(|v| v.norm() >= max * (1.0 - 1e-10))
            .unwrap_or(0);
        let phase = column[pivot].conj() / column[pivot].norm();
        sorted.column_mut(dst).assign(&column.mapv(|v| v * phase));
    }
    let values = Array1::from_iter(order.iter().map(|&k| values[k]));
    (values, sorted)
}

/// Real orthogonal eigenbasis of `S_x` (a real symmetric matrix in the
/// Dicke basis), cached per particle number.
#[derive(Clone, Debug)]
pub struct RealEigenbasis {
    pub eigenvalues: Array1<f64>,
    pub vectors: Array2<f64>,
}

pub fn sx_real_eigenbasis(n_atoms: usize) -> Result<Arc<RealEigenbasis>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<RealEigenbasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("eigenbasis cache poisoned").get(&n_atoms) {
        return Ok(Arc::clone(hit));
    }
    let (_, ops) = build_spin_system(n_atoms)?;
    let sx = ops.sx.mapv(|v| v.re);
    let (eigenvalues, vectors) = sx
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Eigensolver(e.to_string()))?;
    let basis = Arc::new(RealEigenbasis { eigenvalues, vectors });
    let mut guard = cache.lock().expect("eigenbasis cache poisoned");
    Ok(Arc::clone(guard.entry(n_atoms).or_insert(basis)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn max_abs(m: &Array2<C64>) -> f64 {
        m.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn single_spin_is_pauli_over_two() {
        let (_, ops) = build_spin_system(1).unwrap();
        let h = C64::new(0.5, 0.0);
        let z = C64::new(0.0, 0.0);
        assert_eq!(ops.sz, ndarray::array![[h, z], [z, -h]]);
        assert_eq!(ops.sx, ndarray::array![[z, h], [h, z]]);
        assert_eq!(ops.sy, ndarray::array![[z, C64::new(0.0, -0.5)], [C64::new(0.0, 0.5), z]]);
    }

    #[test]
    fn casimir_and_commutators() {
        for n in [1, 2, 3, 5, 10, 37] {
            let (sys, ops) = build_spin_system(n).unwrap();
            let j = sys.j();
            let casimir = ops.sx.dot(&ops.sx) + ops.sy.dot(&ops.sy) + ops.sz.dot(&ops.sz);
            let expected = Array2::<C64>::eye(sys.dim()) * C64::new(j * (j + 1.0), 0.0);
            assert!(max_abs(&(casimir - expected)) < 1e-10, "Casimir N={n}");

            let i = C64::new(0.0, 1.0);
            let comm = |a: &Array2<C64>, b: &Array2<C64>| a.dot(b) - b.dot(a);
            assert!(max_abs(&(comm(&ops.sx, &ops.sy) - &ops.sz * i)) < 1e-10);
            assert!(max_abs(&(comm(&ops.sy, &ops.sz) - &ops.sx * i)) < 1e-10);
            assert!(max_abs(&(comm(&ops.sz, &ops.sx) - &ops.sy * i)) < 1e-10);

            for op in [&ops.sx, &ops.sy, &ops.sz, &ops.sz2] {
                let dagger = op.t().mapv(|v| v.conj());
                assert!(max_abs(&(op - &dagger)) < 1e-12);
            }
        }
    }

    #[test]
    fn casimir_for_two_atoms_is_two() {
        let (_, ops) = build_spin_system(2).unwrap();
        let casimir = ops.sx.dot(&ops.sx) + ops.sy.dot(&ops.sy) + ops.sz.dot(&ops.sz);
        assert!(max_abs(&(casimir - Array2::<C64>::eye(3) * C64::new(2.0, 0.0))) < 1e-14);
    }

    #[test]
    fn commutator_n4_below_1e12() {
        let (_, ops) = build_spin_system(4).unwrap();
        let c = ops.sx.dot(&ops.sy) - ops.sy.dot(&ops.sx) - &ops.sz * C64::new(0.0, 1.0);
        assert!(max_abs(&c) < 1e-12);
    }

    #[test]
    fn ladder_operators_are_tridiagonal() {
        let (_, ops) = build_spin_system(9).unwrap();
        for ((r, c), v) in ops.sx.indexed_iter().chain(ops.sy.indexed_iter()) {
            if r.abs_diff(c) != 1 {
                assert_eq!(*v, C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn rejects_zero_and_oversized_systems() {
        assert!(build_spin_system(0).is_err());
        assert!(build_spin_system_with_limit(11, 10).is_err());
        assert!(build_spin_system_with_limit(10, 10).is_ok());
    }

    #[test]
    fn odd_n_has_half_integer_j() {
        let sys = SpinSystem::new(7).unwrap();
        assert_eq!(sys.j(), 3.5);
        assert_eq!(sys.dim(), 8);
        assert_eq!(sys.m_values()[7], -3.5);
    }

    #[test]
    fn coherent_state_poles() {
        let sys = SpinSystem::new(6).unwrap();
        let north = coherent_state(&sys, 0.0, 1.3).unwrap();
        assert_eq!(north.amplitudes()[0], C64::new(1.0, 0.0));
        assert!(north.amplitudes().iter().skip(1).all(|a| a.norm() == 0.0));

        let south = coherent_state(&sys, PI, 0.4).unwrap();
        assert!(south.amplitudes().iter().take(6).all(|a| a.norm() == 0.0));
        assert_abs_diff_eq!(south.amplitudes()[6].norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn coherent_state_equator_two_atoms() {
        let sys = SpinSystem::new(2).unwrap();
        let psi = coherent_state(&sys, PI / 2.0, 0.0).unwrap();
        let expected = [0.5, FRAC_1_SQRT_2, 0.5];
        for (a, e) in psi.amplitudes().iter().zip(expected) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn coherent_state_rejects_out_of_range_angles() {
        let sys = SpinSystem::new(4).unwrap();
        assert!(coherent_state(&sys, -0.1, 0.0).is_err());
        assert!(coherent_state(&sys, 0.5, std::f64::consts::TAU).is_err());
    }

    #[test]
    fn coherent_state_large_n_is_normalized() {
        let sys = SpinSystem::new(2000).unwrap();
        for theta in [0.01, 0.7, PI / 2.0, 2.9] {
            let psi = coherent_state(&sys, theta, 2.0).unwrap();
            assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
            assert!(psi.amplitudes().iter().all(|a| a.re.is_finite() && a.im.is_finite()));
        }
    }

    #[test]
    fn expectation_values_of_coherent_states() {
        let (sys, ops) = build_spin_system(20).unwrap();
        let eq = coherent_state(&sys, PI / 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(expectation(&eq, &ops.sz).unwrap(), 0.0, epsilon = 1e-12);
        let north = coherent_state(&sys, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(expectation(&north, &ops.sz).unwrap(), 10.0, epsilon = 1e-12);
        let tilted = coherent_state(&sys, 0.7, 0.3).unwrap();
        assert_abs_diff_eq!(expectation(&tilted, &ops.sz).unwrap(), 10.0 * 0.7f64.cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(
            expectation(&tilted, &ops.sx).unwrap(),
            10.0 * 0.7f64.sin() * 0.3f64.cos(),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            expectation(&tilted, &ops.sy).unwrap(),
            10.0 * 0.7f64.sin() * 0.3f64.sin(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn expectation_rejects_mismatch_and_non_hermitian() {
        let (sys, ops) = build_spin_system(3).unwrap();
        let psi = coherent_state(&SpinSystem::new(4).unwrap(), 0.3, 0.0).unwrap();
        assert!(matches!(expectation(&psi, &ops.sx), Err(Error::DimensionMismatch { .. })));
        let psi = coherent_state(&sys, PI / 2.0, 0.0).unwrap();
        let anti = &ops.sx * C64::new(0.0, 1.0);
        assert!(matches!(expectation(&psi, &anti), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn z_basis_is_reversed_identity() {
        let (_, ops) = build_spin_system(4).unwrap();
        let b = measurement_basis(&ops, Axis::Z).unwrap();
        assert_eq!(b.eigenvalues.to_vec(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let check = b.vectors.t().mapv(|v| v.conj()).dot(&ops.sz).dot(&b.vectors);
        assert!(max_abs(&(check - Array2::from_diag(&b.eigenvalues.mapv(|v| C64::new(v, 0.0))))) == 0.0);
    }

    #[test]
    fn x_basis_single_spin() {
        let (_, ops) = build_spin_system(1).unwrap();
        let b = measurement_basis(&ops, Axis::X).unwrap();
        assert_abs_diff_eq!(b.eigenvalues[0], -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(b.eigenvalues[1], 0.5, epsilon = 1e-14);
        let lo = b.vectors.column(0);
        let hi = b.vectors.column(1);
        assert_abs_diff_eq!((lo[0] + lo[1]).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((hi[0] - hi[1]).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hi[0].norm(), FRAC_1_SQRT_2, epsilon = 1e-14);
    }

    #[test]
    fn y_basis_diagonalizes_sy() {
        let (_, ops) = build_spin_system(6).unwrap();
        let b = measurement_basis(&ops, Axis::Y).unwrap();
        let d = b.vectors.t().mapv(|v| v.conj()).dot(&ops.sy).dot(&b.vectors);
        let expected = Array2::from_diag(&b.eigenvalues.mapv(|v| C64::new(v, 0.0)));
        assert!(max_abs(&(d.clone() - expected)) < 1e-10, "{d:?}");
        for (k, e) in b.eigenvalues.iter().enumerate() {
            assert_abs_diff_eq!(*e, -3.0 + k as f64, epsilon = 1e-10);
        }
    }

    #[test]
    fn basis_is_cached() {
        let (_, ops) = build_spin_system(13).unwrap();
        let a = measurement_basis(&ops, Axis::X).unwrap();
        let b = measurement_basis(&ops, Axis::X).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let c = measurement_basis_for(13, Axis::X).unwrap();
        assert!(Arc::ptr_eq(&a, &c));
    }

    #[test]
    fn phase_fixing_makes_pivot_real_positive() {
        let (_, ops) = build_spin_system(8).unwrap();
        let b = measurement_basis(&ops, Axis::Y).unwrap();
        for col in b.vectors.columns() {
            let max = col.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let pivot = col.iter().find(|v| v.norm() >= max * (1.0 - 1e-10)).unwrap();
            assert!(pivot.re > 0.0 && pivot.im.abs() < 1e-14);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (sys, ops) = build_spin_system(10).unwrap();
        let psi = coherent_state(&sys, 1.1, 4.0).unwrap();
        for axis in Axis::ALL {
            let p = measurement_basis(&ops, axis).unwrap().probabilities(&psi).unwrap();
            assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn real_sx_basis_matches_spectrum() {
        let basis = sx_real_eigenbasis(5).unwrap();
        for (k, e) in basis.eigenvalues.iter().enumerate() {
            assert_abs_diff_eq!(*e, -2.5 + k as f64, epsilon = 1e-12);
        }
    }
}
