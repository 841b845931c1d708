//! One-period propagators of the driven Hamiltonian
//! `H(t) = chi/N Sz^2 + Bz Sz + Bx cos(omega t) Sx` and stroboscopic evolution.
//!
//! The static part is diagonal in the Dicke basis and the drive is diagonal in
//! the (real, orthogonal) `S_x` eigenbasis, so a split step only needs phase
//! factors plus one change of basis. Between consecutive sub-steps the two
//! half-step diagonal factors merge, which turns a whole period into an
//! alternating product of diagonal phases and a few precomputed dense
//! matrices `W(s) = V^T exp(-i H1 s) V`.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex, OnceLock};

use log::debug;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis as NdAxis};
use ndarray_linalg::{Eig, Eigh, Inverse, UPLO};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrology;
use crate::spin::{self, l2_norm, StateVector};

/// Sub-steps per drive period used unless configured otherwise.
pub const DEFAULT_STEPS: usize = 1000;
/// Default finite-difference step in `B_z`.
pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Relative QFI agreement demanded between steps `epsilon` and `epsilon/2`.
pub const DEFAULT_RICHARDSON_TOLERANCE: f64 = 1e-3;
/// Maximum accepted `|U^dag U - 1|`.
pub const UNITARITY_TOLERANCE: f64 = 1e-9;
/// Norm drift above which evolved states are renormalized.
pub const DRIFT_TOLERANCE: f64 = 1e-10;

/// Physical configuration of the driven system (`hbar = 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_atoms: usize,
    pub chi: f64,
    pub bz: f64,
    pub bx: f64,
    pub omega: f64,
}

impl ModelParams {
    /// Parameters with the drive frequency at its default `2 pi`.
    pub fn new(n_atoms: usize, chi: f64, bz: f64, bx: f64) -> Self {
        Self { n_atoms, chi, bz, bx, omega: TAU }
    }

    pub fn with_bz(self, bz: f64) -> Self {
        Self { bz, ..self }
    }

    pub fn with_chi(self, chi: f64) -> Self {
        Self { chi, ..self }
    }

    pub fn with_n_atoms(self, n_atoms: usize) -> Self {
        Self { n_atoms, ..self }
    }

    pub fn with_omega(self, omega: f64) -> Self {
        Self { omega, ..self }
    }

    /// Drive period `2 pi / omega`.
    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid("omega", "must be positive and finite"));
        }
        if self.n_atoms == 0 {
            return Err(Error::invalid("n_atoms", "must be at least 1"));
        }
        for (field, v) in [("chi", self.chi), ("bz", self.bz), ("bx", self.bx)] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        Ok(())
    }

    fn key(&self) -> [u64; 5] {
        [
            self.n_atoms as u64,
            self.chi.to_bits(),
            self.bz.to_bits(),
            self.bx.to_bits(),
            self.omega.to_bits(),
        ]
    }
}

/// How a single period is discretized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Fourth-order symmetric composition (triple jump) of midpoint Strang
    /// sub-steps; three sub-steps per step.
    SplitStep,
    /// Single second-order Strang sub-step per step.
    Strang,
    /// `exp(-i H(t_mid) dt)` per step through a dense eigendecomposition.
    ExactStep,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split-step" => Ok(Method::SplitStep),
            "strang" => Ok(Method::Strang),
            "exact-step" => Ok(Method::ExactStep),
            other => Err(Error::invalid("method", format!("unknown method `{other}`"))),
        }
    }
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::SplitStep => "split-step",
            Method::Strang => "strang",
            Method::ExactStep => "exact-step",
        }
    }

    /// Sub-step lengths in units of the step `dt`.
    fn stage_weights(&self) -> Vec<f64> {
        match self {
            Method::SplitStep => {
                let cbrt2 = 2f64.powf(1.0 / 3.0);
                let outer = 1.0 / (2.0 - cbrt2);
                vec![outer, -cbrt2 / (2.0 - cbrt2), outer]
            }
            Method::Strang | Method::ExactStep => vec![1.0],
        }
    }
}

/// `U(T; 0)` for one drive period.
#[derive(Clone, Debug)]
pub struct PeriodPropagator {
    pub u: Array2<C64>,
    pub params: ModelParams,
    pub steps: usize,
    pub method: Method,
}

impl PeriodPropagator {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `max |U^dag U - 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.u)
    }
}

pub(crate) fn unitarity_defect(u: &Array2<C64>) -> f64 {
    let dagger = u.t().mapv(|v| v.conj());
    let prod = dagger.dot(u);
    prod.indexed_iter()
        .map(|((r, c), v)| {
            let target = if r == c { 1.0 } else { 0.0 };
            (v - C64::new(target, 0.0)).norm()
        })
        .fold(0.0, f64::max)
}

/// Static diagonal energies `chi/N m^2 + Bz m`.
fn static_energies(params: &ModelParams) -> Array1<f64> {
    let j = params.n_atoms as f64 / 2.0;
    let n = params.n_atoms as f64;
    Array1::from_iter((0..=params.n_atoms).map(|k| {
        let m = j - k as f64;
        params.chi / n * m * m + params.bz * m
    }))
}

fn diag_phases(energies: &Array1<f64>, time: f64) -> Array1<C64> {
    energies.mapv(|e| C64::from_polar(1.0, -e * time))
}

fn scale_rows(m: &mut Array2<C64>, phases: &Array1<C64>) {
    for (mut row, p) in m.axis_iter_mut(NdAxis(0)).zip(phases.iter()) {
        row.mapv_inplace(|v| v * p);
    }
}

fn scale_vec(v: &mut Array1<C64>, phases: &Array1<C64>) {
    v.iter_mut().zip(phases.iter()).for_each(|(a, p)| *a *= p);
}

/// Precomputed factors of a split-step period.
struct SplitKernel {
    dt: f64,
    omega: f64,
    bx: f64,
    weights: Vec<f64>,
    x_values: Array1<f64>,
    /// `V^T D(h_0 / 2)`: Dicke basis into the x basis, with the opening half step.
    enter: Array2<C64>,
    /// `D(h_0 / 2) V`: back to the Dicke basis, with the closing half step.
    leave: Array2<C64>,
    /// `W` between sub-steps `s` and `s+1` of one step.
    inner: Vec<Array2<C64>>,
    /// `W` joining the last sub-step of a step to the first of the next.
    wrap: Array2<C64>,
}

impl SplitKernel {
    fn new(params: &ModelParams, steps: usize, method: Method) -> Result<Self> {
        let basis = spin::sx_real_eigenbasis(params.n_atoms)?;
        let v = &basis.vectors;
        let energies = static_energies(params);
        let dt = params.period() / steps as f64;
        let weights = method.stage_weights();
        let w_matrix = |time: f64| -> Array2<C64> {
            let cos = energies.mapv(|e| (e * time).cos());
            let sin = energies.mapv(|e| -(e * time).sin());
            let mut scaled_c = v.clone();
            let mut scaled_s = v.clone();
            for k in 0..v.nrows() {
                scaled_c.row_mut(k).mapv_inplace(|x| x * cos[k]);
                scaled_s.row_mut(k).mapv_inplace(|x| x * sin[k]);
            }
            let re = v.t().dot(&scaled_c);
            let im = v.t().dot(&scaled_s);
            Array2::from_shape_fn(re.raw_dim(), |idx| C64::new(re[idx], im[idx]))
        };
        let inner = weights
            .windows(2)
            .map(|w| w_matrix(0.5 * (w[0] + w[1]) * dt))
            .collect();
        let first = weights[0];
        let last = *weights.last().expect("at least one stage");
        let wrap = w_matrix(0.5 * (first + last) * dt);
        let opening = diag_phases(&energies, 0.5 * first * dt);
        let closing = diag_phases(&energies, 0.5 * last * dt);

        let vc = v.mapv(|x| C64::new(x, 0.0));
        let mut enter = vc.t().to_owned();
        for (mut col, p) in enter.axis_iter_mut(NdAxis(1)).zip(opening.iter()) {
            col.mapv_inplace(|x| x * p);
        }
        let mut leave = vc;
        scale_rows(&mut leave, &closing);

        Ok(Self {
            dt,
            omega: params.omega,
            bx: params.bx,
            weights,
            x_values: basis.eigenvalues.clone(),
            enter,
            leave,
            inner,
            wrap,
        })
    }

    /// Drive phases for sub-step `stage` of step `step` (midpoint rule).
    fn drive_phases(&self, step: usize, stage: usize) -> Array1<C64> {
        let offset: f64 = self.weights[..stage].iter().sum();
        let h = self.weights[stage] * self.dt;
        let t_mid = (step as f64 + offset) * self.dt + 0.5 * h;
        let amp = self.bx * (self.omega * t_mid).cos() * h;
        self.x_values.mapv(|l| C64::from_polar(1.0, -amp * l))
    }

    /// Drive phases for every sub-step of a period, in application order.
    fn period_phases(&self, steps: usize) -> Vec<Array1<C64>> {
        (0..steps)
            .flat_map(|k| (0..self.weights.len()).map(move |s| (k, s)))
            .map(|(k, s)| self.drive_phases(k, s))
            .collect()
    }

    /// W following sub-step number `index` (flattened over the period).
    fn link(&self, index: usize) -> &Array2<C64> {
        let stages = self.weights.len();
        let s = index % stages;
        if s + 1 == stages { &self.wrap } else { &self.inner[s] }
    }

    fn build(&self, steps: usize) -> Array2<C64> {
        let phases = self.period_phases(steps);
        let mut m = self.enter.clone();
        let mut scratch = Array2::zeros(m.raw_dim());
        let total = phases.len();
        for (i, p) in phases.iter().enumerate() {
            scale_rows(&mut m, p);
            if i + 1 < total {
                general_mat_mul(C64::new(1.0, 0.0), self.link(i), &m, C64::new(0.0, 0.0), &mut scratch);
                std::mem::swap(&mut m, &mut scratch);
            }
        }
        self.leave.dot(&m)
    }

    /// Calls `visit` with the state after each period listed in `points`
    /// (sorted, all within `1..=n_periods`).
    fn evolve(
        &self,
        steps: usize,
        psi: &Array1<C64>,
        n_periods: u64,
        points: &[u64],
        mut visit: impl FnMut(u64, &Array1<C64>),
    ) {
        let phases = self.period_phases(steps);
        let mut x = self.enter.dot(psi);
        let last = phases.len() - 1;
        for period in 1..=n_periods {
            for (i, p) in phases[..last].iter().enumerate() {
                scale_vec(&mut x, p);
                x = self.link(i).dot(&x);
            }
            scale_vec(&mut x, &phases[last]);
            if points.binary_search(&period).is_ok() {
                visit(period, &self.leave.dot(&x));
            }
            if period < n_periods {
                x = self.wrap.dot(&x);
            }
        }
    }
}

/// Per-step exponentials for the exact-step reference path.
struct ExactKernel {
    energies: Array1<f64>,
    sx: Array2<f64>,
    dt: f64,
    omega: f64,
    bx: f64,
}

impl ExactKernel {
    fn new(params: &ModelParams, steps: usize) -> Result<Self> {
        let (_, ops) = spin::build_spin_system(params.n_atoms)?;
        Ok(Self {
            energies: static_energies(params),
            sx: ops.sx.mapv(|v| v.re),
            dt: params.period() / steps as f64,
            omega: params.omega,
            bx: params.bx,
        })
    }

    fn step(&self, k: usize) -> Result<Array2<C64>> {
        let c = (self.omega * (k as f64 + 0.5) * self.dt).cos();
        let mut h = &self.sx * (self.bx * c);
        for (i, e) in self.energies.iter().enumerate() {
            h[[i, i]] += e;
        }
        let (values, vectors) = h.eigh(UPLO::Lower).map_err(|e| Error::Eigensolver(e.to_string()))?;
        let q = vectors.mapv(|x| C64::new(x, 0.0));
        let mut scaled = q.t().to_owned();
        scale_rows(&mut scaled, &diag_phases(&values, self.dt));
        Ok(q.dot(&scaled))
    }
}

/// Builds `U(T; 0)` with `steps` sub-periods.
pub fn period_propagator(params: &ModelParams, steps: usize, method: Method) -> Result<PeriodPropagator> {
    params.validate()?;
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    let u = match method {
        Method::SplitStep | Method::Strang => SplitKernel::new(params, steps, method)?.build(steps),
        Method::ExactStep => {
            let kernel = ExactKernel::new(params, steps)?;
            let mut u = Array2::<C64>::eye(params.n_atoms + 1);
            for k in 0..steps {
                u = kernel.step(k)?.dot(&u);
            }
            u
        }
    };
    let deviation = unitarity_defect(&u);
    if !(deviation < UNITARITY_TOLERANCE) {
        return Err(Error::NonUnitary { steps, deviation });
    }
    Ok(PeriodPropagator { u, params: *params, steps, method })
}

type CacheKey = ([u64; 5], usize, Method);

/// Propagators keyed on the full parameter set, step count and method.
#[derive(Default)]
pub struct PropagatorCache {
    entries: Mutex<HashMap<CacheKey, Arc<PeriodPropagator>>>,
}

impl PropagatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide cache shared by the sweep drivers.
    pub fn global() -> &'static PropagatorCache {
        static GLOBAL: OnceLock<PropagatorCache> = OnceLock::new();
        GLOBAL.get_or_init(PropagatorCache::new)
    }

    pub fn get_or_build(&self, params: &ModelParams, steps: usize, method: Method) -> Result<Arc<PeriodPropagator>> {
        let key = (params.key(), steps, method);
        if let Some(hit) = self.entries.lock().expect("propagator cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(period_propagator(params, steps, method)?);
        let mut entries = self.entries.lock().expect("propagator cache poisoned");
        Ok(Arc::clone(entries.entry(key).or_insert(built)))
    }

    pub fn contains(&self, params: &ModelParams, steps: usize, method: Method) -> bool {
        let key = (params.key(), steps, method);
        self.entries.lock().expect("propagator cache poisoned").contains_key(&key)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("propagator cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.entries.lock().expect("propagator cache poisoned").clear();
    }
}

/// Which stroboscopic instants to keep.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    /// Only the state after the last period.
    Final,
    /// Every period `1..=n`.
    Every,
    /// Explicit period counts; must not exceed the horizon.
    At(Vec<u64>),
}

impl Schedule {
    /// `1, 2, 4, ...` up to and including the largest power of two `<= n`.
    pub fn powers_of_two(n_periods: u64) -> Self {
        let mut points = Vec::new();
        let mut p = 1u64;
        while p <= n_periods {
            points.push(p);
            p *= 2;
        }
        Schedule::At(points)
    }

    fn resolve(&self, n_periods: u64) -> Result<Vec<u64>> {
        let mut points = match self {
            Schedule::Final => vec![n_periods],
            Schedule::Every => (1..=n_periods).collect(),
            Schedule::At(points) => points.clone(),
        };
        if let Some(&bad) = points.iter().find(|&&p| p > n_periods) {
            return Err(Error::ScheduleBeyondHorizon { entry: bad, horizon: n_periods });
        }
        points.sort_unstable();
        points.dedup();
        Ok(points)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolveMode {
    /// Repeated matrix-vector products.
    Iterate,
    /// Binary powers `U^(2^k)` obtained by squaring.
    RepeatedSquaring,
}

/// States recorded along a stroboscopic evolution.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub periods: Vec<u64>,
    pub states: Vec<StateVector>,
    /// Number of times the norm drift exceeded the tolerance.
    pub renormalizations: usize,
    pub max_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> Option<&StateVector> {
        self.states.last()
    }
}

struct DriftMonitor {
    renormalizations: usize,
    max_drift: f64,
}

impl DriftMonitor {
    fn new() -> Self {
        Self { renormalizations: 0, max_drift: 0.0 }
    }

    fn check(&mut self, psi: &mut Array1<C64>, period: u64) {
        let norm = l2_norm(psi);
        let drift = (norm - 1.0).abs();
        self.max_drift = self.max_drift.max(drift);
        if drift > DRIFT_TOLERANCE {
            debug!("norm drift {drift:.3e} at period {period}; renormalizing");
            self.renormalizations += 1;
            psi.mapv_inplace(|a| a / norm);
        }
    }
}

/// Binary powers of a one-period propagator.
pub struct PowerLadder {
    powers: Vec<Array2<C64>>,
}

impl PowerLadder {
    pub fn new(u: &Array2<C64>) -> Self {
        Self { powers: vec![u.clone()] }
    }

    fn ensure(&mut self, bits: usize) {
        while self.powers.len() < bits {
            let last = self.powers.last().expect("ladder starts with U");
            let next = last.dot(last);
            self.powers.push(next);
        }
    }

    /// `U^n psi`, applying the binary powers of `n`.
    pub fn apply(&mut self, n: u64, psi: &Array1<C64>) -> Array1<C64> {
        let bits = (u64::BITS - n.leading_zeros()) as usize;
        self.ensure(bits);
        let mut out = psi.clone();
        for b in 0..bits {
            if n >> b & 1 == 1 {
                out = self.powers[b].dot(&out);
            }
        }
        out
    }

    /// The matrix `U^n`.
    pub fn matrix(&mut self, n: u64) -> Array2<C64> {
        let bits = (u64::BITS - n.leading_zeros()) as usize;
        self.ensure(bits);
        let dim = self.powers[0].nrows();
        let mut out: Option<Array2<C64>> = None;
        for b in 0..bits {
            if n >> b & 1 == 1 {
                out = Some(match out {
                    None => self.powers[b].clone(),
                    Some(acc) => self.powers[b].dot(&acc),
                });
            }
        }
        out.unwrap_or_else(|| Array2::eye(dim))
    }
}

/// Evolves `psi0` through `n_periods` applications of `u`.
pub fn stroboscopic_evolve(
    u: &PeriodPropagator,
    psi0: &StateVector,
    n_periods: u64,
    schedule: &Schedule,
    mode: EvolveMode,
) -> Result<Trajectory> {
    if psi0.dim() != u.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), found: psi0.dim() });
    }
    let points = if n_periods == 0 { Vec::new() } else { schedule.resolve(n_periods)? };
    let mut monitor = DriftMonitor::new();
    let mut periods = Vec::with_capacity(points.len());
    let mut states = Vec::with_capacity(points.len());
    match mode {
        EvolveMode::Iterate => {
            let mut psi = psi0.amplitudes().clone();
            let mut next = points.iter().peekable();
            for period in 1..=n_periods {
                psi = u.u.dot(&psi);
                monitor.check(&mut psi, period);
                if next.peek() == Some(&&period) {
                    next.next();
                    periods.push(period);
                    states.push(StateVector::from_raw(psi.clone()));
                }
            }
        }
        EvolveMode::RepeatedSquaring => {
            let mut ladder = PowerLadder::new(&u.u);
            for &period in &points {
                let mut psi = ladder.apply(period, psi0.amplitudes());
                monitor.check(&mut psi, period);
                periods.push(period);
                states.push(StateVector::from_raw(psi));
            }
        }
    }
    if n_periods == 0 {
        periods.push(0);
        states.push(psi0.clone());
    }
    Ok(Trajectory { periods, states, renormalizations: monitor.renormalizations, max_drift: monitor.max_drift })
}

/// Evolves a state sub-step by sub-step without forming `U`; cheaper than
/// building the propagator when `n_periods` is small compared with the
/// Hilbert dimension.
pub fn evolve_direct(
    params: &ModelParams,
    steps: usize,
    method: Method,
    psi0: &StateVector,
    n_periods: u64,
    schedule: &Schedule,
) -> Result<Trajectory> {
    params.validate()?;
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    if psi0.dim() != params.n_atoms + 1 {
        return Err(Error::DimensionMismatch { expected: params.n_atoms + 1, found: psi0.dim() });
    }
    if n_periods == 0 {
        return Ok(Trajectory { periods: vec![0], states: vec![psi0.clone()], renormalizations: 0, max_drift: 0.0 });
    }
    let points = schedule.resolve(n_periods)?;
    let mut monitor = DriftMonitor::new();
    let mut periods = Vec::with_capacity(points.len());
    let mut states = Vec::with_capacity(points.len());
    let mut record = |period: u64, psi: &Array1<C64>| {
        if points.binary_search(&period).is_ok() {
            let mut psi = psi.clone();
            monitor.check(&mut psi, period);
            periods.push(period);
            states.push(StateVector::from_raw(psi));
        }
    };
    match method {
        Method::SplitStep | Method::Strang => {
            SplitKernel::new(params, steps, method)?.evolve(steps, psi0.amplitudes(), n_periods, &points, &mut record);
        }
        Method::ExactStep => {
            let kernel = ExactKernel::new(params, steps)?;
            let mut psi = psi0.amplitudes().clone();
            for period in 1..=n_periods {
                for k in 0..steps {
                    psi = kernel.step(k)?.dot(&psi);
                }
                record(period, &psi);
            }
        }
    }
    Ok(Trajectory { periods, states, renormalizations: monitor.renormalizations, max_drift: monitor.max_drift })
}

/// How [`derivative_state`] and the sweep drivers obtain final states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Direct sub-step evolution for short horizons, cached propagators otherwise.
    Auto,
    Direct,
    Propagator,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Strategy::Auto),
            "direct" => Ok(Strategy::Direct),
            "propagator" => Ok(Strategy::Propagator),
            other => Err(Error::invalid("strategy", format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionOptions {
    pub steps: usize,
    pub method: Method,
    pub strategy: Strategy,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS, method: Method::SplitStep, strategy: Strategy::Auto }
    }
}

/// Final state after `n_periods` at `params`.
pub fn final_state(
    params: &ModelParams,
    psi0: &StateVector,
    n_periods: u64,
    opts: &EvolutionOptions,
    cache: &PropagatorCache,
) -> Result<(StateVector, f64)> {
    let traj = evolve_with(params, psi0, n_periods, &Schedule::Final, opts, cache)?;
    let max_drift = traj.max_drift;
    let state = traj.states.into_iter().last().expect("final state recorded");
    Ok((state, max_drift))
}

/// Evolves along `schedule`, picking direct stepping or a (cached) propagator.
pub fn evolve_with(
    params: &ModelParams,
    psi0: &StateVector,
    n_periods: u64,
    schedule: &Schedule,
    opts: &EvolutionOptions,
    cache: &PropagatorCache,
) -> Result<Trajectory> {
    let dim = params.n_atoms + 1;
    let direct = match opts.strategy {
        Strategy::Direct => true,
        Strategy::Propagator => false,
        // A dense product costs about as much as dim/2 matrix-vector products.
        Strategy::Auto => {
            !cache.contains(params, opts.steps, opts.method) && n_periods.saturating_mul(2) < dim as u64
        }
    };
    if direct {
        return evolve_direct(params, opts.steps, opts.method, psi0, n_periods, schedule);
    }
    let u = cache.get_or_build(params, opts.steps, opts.method)?;
    let log2 = (u64::BITS - n_periods.leading_zeros()) as u64;
    let mode = if n_periods > dim as u64 * log2.max(1) {
        EvolveMode::RepeatedSquaring
    } else {
        EvolveMode::Iterate
    };
    stroboscopic_evolve(&u, psi0, n_periods, schedule, mode)
}

/// Richardson consistency between steps `epsilon` and `epsilon / 2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RichardsonCheck {
    pub qfi_full: f64,
    pub qfi_half: f64,
    pub relative_difference: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeOptions {
    pub evolution: EvolutionOptions,
    /// Compare against `epsilon / 2`; costs two further evolutions.
    pub richardson: bool,
    pub richardson_tolerance: f64,
}

impl Default for DerivativeOptions {
    fn default() -> Self {
        Self {
            evolution: EvolutionOptions::default(),
            richardson: true,
            richardson_tolerance: DEFAULT_RICHARDSON_TOLERANCE,
        }
    }
}

/// Final states at `B_z` and `B_z +/- epsilon` plus the central difference.
#[derive(Clone, Debug)]
pub struct DerivativeState {
    pub psi_f: StateVector,
    pub dpsi: Array1<C64>,
    pub psi_plus: StateVector,
    pub psi_minus: StateVector,
    pub epsilon: f64,
    pub richardson: Option<RichardsonCheck>,
    pub warning: Option<String>,
}

/// Largest step that keeps `epsilon * t * J` at `budget`, capped by `base`.
///
/// `|d psi / d B_z|` is bounded by `t J`, so this bounds the phase error of
/// the central difference uniformly in time.
pub fn scaled_epsilon(base: f64, params: &ModelParams, n_periods: u64, budget: f64) -> f64 {
    let t = params.period() * n_periods.max(1) as f64;
    let j = params.n_atoms as f64 / 2.0;
    base.min(budget / (t * j))
}

fn central_difference(
    params: &ModelParams,
    psi0: &StateVector,
    n_periods: u64,
    epsilon: f64,
    opts: &EvolutionOptions,
    cache: &PropagatorCache,
) -> Result<(StateVector, StateVector, Array1<C64>)> {
    let (plus, _) = final_state(&params.with_bz(params.bz + epsilon), psi0, n_periods, opts, cache)?;
    let (minus, _) = final_state(&params.with_bz(params.bz - epsilon), psi0, n_periods, opts, cache)?;
    let diff = plus.amplitudes() - minus.amplitudes();
    let size = diff.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if size < 1e3 * f64::EPSILON {
        return Err(Error::EpsilonTooSmall { epsilon, difference: size });
    }
    let dpsi = diff.mapv(|v| v / (2.0 * epsilon));
    Ok((plus, minus, dpsi))
}

/// Derivative of the final state with respect to `B_z` by central differences.
pub fn derivative_state(
    params: &ModelParams,
    psi0: &StateVector,
    n_periods: u64,
    epsilon: f64,
    opts: &DerivativeOptions,
    cache: &PropagatorCache,
) -> Result<DerivativeState> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    params.validate()?;
    let (psi_f, _) = final_state(params, psi0, n_periods, &opts.evolution, cache)?;
    let (psi_plus, psi_minus, dpsi) = central_difference(params, psi0, n_periods, epsilon, &opts.evolution, cache)?;

    let mut richardson = None;
    let mut warning = None;
    if opts.richardson {
        let full = metrology::qfi(&psi_f, &dpsi)?.value;
        let (_, _, dpsi_half) = central_difference(params, psi0, n_periods, epsilon / 2.0, &opts.evolution, cache)?;
        let half = metrology::qfi(&psi_f, &dpsi_half)?.value;
        let scale = full.abs().max(half.abs());
        let rel = if scale > 0.0 { (full - half).abs() / scale } else { 0.0 };
        // Values near zero carry only noise; judge them on an absolute scale.
        let passed = rel <= opts.richardson_tolerance || (full - half).abs() < 1e-8;
        if !passed {
            warning = Some(format!(
                "Richardson check failed: QFI {full:.6e} (eps={epsilon:e}) vs {half:.6e} (eps/2), rel. diff {rel:.2e}"
            ));
        }
        richardson = Some(RichardsonCheck { qfi_full: full, qfi_half: half, relative_difference: rel, passed });
    }
    Ok(DerivativeState { psi_f, dpsi, psi_plus, psi_minus, epsilon, richardson, warning })
}

/// Effective static Hamiltonian `H_F = (i/T) log U`.
#[derive(Clone, Debug)]
pub struct FloquetHamiltonian {
    pub h: Array2<C64>,
    /// Quasienergies `-arg(lambda) / T`, ascending.
    pub quasienergies: Array1<f64>,
    /// Eigenvalues found on the branch cut and assigned phase `+pi`.
    pub branch_cut_hits: usize,
}

/// Principal-branch logarithm of the one-period propagator.
pub fn floquet_hamiltonian(u: &PeriodPropagator) -> Result<FloquetHamiltonian> {
    let defect = u.unitarity_defect();
    if !(defect < UNITARITY_TOLERANCE) {
        return Err(Error::NonUnitary { steps: u.steps, deviation: defect });
    }
    let period = u.params.period();
    let (values, vectors) = u.u.eig().map_err(|e| Error::Eigensolver(e.to_string()))?;
    let inverse = vectors.inv().map_err(|e| Error::Eigensolver(e.to_string()))?;

    let mut hits = 0;
    let energies: Array1<f64> = values
        .iter()
        .map(|lambda| {
            let mut phase = lambda.arg();
            if (std::f64::consts::PI - phase.abs()) < 1e-12 {
                hits += 1;
                phase = std::f64::consts::PI;
            }
            -phase / period
        })
        .collect();

    let mut scaled = inverse;
    scale_rows(&mut scaled, &energies.mapv(|e| C64::new(e, 0.0)));
    let h = vectors.dot(&scaled);
    let dagger = h.t().mapv(|v| v.conj());
    let asym = (&h - &dagger).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if asym > 1e-9 {
        return Err(Error::Numerical(format!("Floquet Hamiltonian not Hermitian (defect {asym:.3e})")));
    }
    let h = (&h + &dagger).mapv(|v| v * 0.5);
    let mut quasienergies = energies.to_vec();
    quasienergies.sort_by(f64::total_cmp);
    Ok(FloquetHamiltonian { h, quasienergies: Array1::from(quasienergies), branch_cut_hits: hits })
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn hermitian_exp(h: &Array2<C64>, t: f64) -> Result<Array2<C64>> {
    let (values, vectors) = spin::hermitian_eigh(h)?;
    let mut scaled = vectors.t().mapv(|v| v.conj());
    scale_rows(&mut scaled, &diag_phases(&values, t));
    Ok(vectors.dot(&scaled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{build_spin_system, coherent_state, SpinSystem};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn max_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(4, 1.0, 1.0, 1.0).with_omega(0.0).validate().is_err());
        assert!(ModelParams::new(0, 1.0, 1.0, 1.0).validate().is_err());
        assert!(period_propagator(&ModelParams::new(4, 1.0, 1.0, 1.0), 0, Method::SplitStep).is_err());
    }

    #[test]
    fn static_field_is_diagonal_phase() {
        let params = ModelParams::new(5, 0.0, 0.8, 0.0);
        let m = SpinSystem::new(5).unwrap().m_values();
        let expected = Array2::from_diag(&m.mapv(|mz| C64::from_polar(1.0, -0.8 * mz)));
        for method in [Method::SplitStep, Method::Strang, Method::ExactStep] {
            let u = period_propagator(&params, 50, method).unwrap();
            assert!(max_diff(&u.u, &expected) < 1e-12, "{method:?}");
        }
    }

    #[test]
    fn pure_drive_integrates_to_identity() {
        let params = ModelParams::new(6, 0.0, 0.0, 2.3);
        for method in [Method::SplitStep, Method::Strang, Method::ExactStep] {
            let u = period_propagator(&params, 200, method).unwrap();
            assert!(max_diff(&u.u, &Array2::eye(7)) < 1e-8, "{method:?}");
        }
    }

    #[test]
    fn split_step_matches_exact_step() {
        let params = ModelParams::new(8, 10.0, PI / 2.0, 1.5);
        let split = period_propagator(&params, 1000, Method::SplitStep).unwrap();
        let exact = period_propagator(&params, 8000, Method::ExactStep).unwrap();
        assert!(max_diff(&split.u, &exact.u) < 1e-6);
    }

    #[test]
    fn strang_is_second_order() {
        let params = ModelParams::new(6, 10.0, PI / 2.0, 1.5);
        let reference = period_propagator(&params, 2000, Method::SplitStep).unwrap();
        let coarse = period_propagator(&params, 100, Method::Strang).unwrap();
        let fine = period_propagator(&params, 200, Method::Strang).unwrap();
        let ratio = max_diff(&coarse.u, &reference.u) / max_diff(&fine.u, &reference.u);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn direct_evolution_matches_propagator() {
        let params = ModelParams::new(10, 10.0, PI / 2.0, 1.5);
        let psi0 = coherent_state(&SpinSystem::new(10).unwrap(), 2.0, 1.0).unwrap();
        for method in [Method::SplitStep, Method::Strang] {
            let u = period_propagator(&params, 100, method).unwrap();
            let a = stroboscopic_evolve(&u, &psi0, 5, &Schedule::Every, EvolveMode::Iterate).unwrap();
            let b = evolve_direct(&params, 100, method, &psi0, 5, &Schedule::Every).unwrap();
            assert_eq!(a.periods, b.periods);
            for (x, y) in a.states.iter().zip(&b.states) {
                let d = (x.amplitudes() - y.amplitudes()).iter().map(|v| v.norm()).fold(0.0, f64::max);
                assert!(d < 1e-12, "{method:?} {d}");
            }
        }
    }

    #[test]
    fn zero_periods_returns_initial_state() {
        let params = ModelParams::new(4, 1.0, 0.3, 0.7);
        let psi0 = coherent_state(&SpinSystem::new(4).unwrap(), 1.0, 2.0).unwrap();
        let u = period_propagator(&params, 20, Method::SplitStep).unwrap();
        let t = stroboscopic_evolve(&u, &psi0, 0, &Schedule::Final, EvolveMode::Iterate).unwrap();
        assert_eq!(t.states, vec![psi0.clone()]);
        let t = evolve_direct(&params, 20, Method::SplitStep, &psi0, 0, &Schedule::Final).unwrap();
        assert_eq!(t.states, vec![psi0]);
    }

    #[test]
    fn schedule_beyond_horizon_is_rejected() {
        let params = ModelParams::new(4, 1.0, 0.3, 0.7);
        let psi0 = coherent_state(&SpinSystem::new(4).unwrap(), 1.0, 2.0).unwrap();
        let u = period_propagator(&params, 20, Method::SplitStep).unwrap();
        let err = stroboscopic_evolve(&u, &psi0, 3, &Schedule::At(vec![2, 4]), EvolveMode::Iterate);
        assert!(matches!(err, Err(Error::ScheduleBeyondHorizon { entry: 4, horizon: 3 })));
    }

    #[test]
    fn free_precession_rotates_coherent_state() {
        let bz = 0.37;
        let params = ModelParams::new(12, 0.0, bz, 0.0);
        let sys = SpinSystem::new(12).unwrap();
        let psi0 = coherent_state(&sys, PI / 2.0, 0.0).unwrap();
        let u = period_propagator(&params, 100, Method::SplitStep).unwrap();
        let t = stroboscopic_evolve(&u, &psi0, 1, &Schedule::Final, EvolveMode::Iterate).unwrap();
        // exp(-i bz T Sz) advances phi by bz T up to a global phase.
        let predicted = coherent_state(&sys, PI / 2.0, bz * params.period()).unwrap();
        let f = t.last().unwrap().inner(&predicted).unwrap().norm_sqr();
        assert!(f > 1.0 - 1e-9, "fidelity {f}");
    }

    #[test]
    fn squaring_matches_iteration() {
        let params = ModelParams::new(20, 10.0, PI / 2.0, 1.5);
        let psi0 = coherent_state(&SpinSystem::new(20).unwrap(), 2.0, 1.0).unwrap();
        let u = period_propagator(&params, 200, Method::SplitStep).unwrap();
        let sched = Schedule::powers_of_two(256);
        let a = stroboscopic_evolve(&u, &psi0, 256, &sched, EvolveMode::Iterate).unwrap();
        let b = stroboscopic_evolve(&u, &psi0, 256, &sched, EvolveMode::RepeatedSquaring).unwrap();
        assert_eq!(a.periods, b.periods);
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(x.inner(y).unwrap().norm_sqr() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn power_ladder_matrix_matches_iteration() {
        let params = ModelParams::new(5, 3.0, 0.4, 1.1);
        let u = period_propagator(&params, 50, Method::SplitStep).unwrap();
        let mut ladder = PowerLadder::new(&u.u);
        let mut expected = Array2::<C64>::eye(6);
        for _ in 0..13 {
            expected = u.u.dot(&expected);
        }
        assert!(max_diff(&ladder.matrix(13), &expected) < 1e-12);
        assert!(max_diff(&ladder.matrix(0), &Array2::eye(6)) == 0.0);
    }

    #[test]
    fn cache_returns_shared_propagator() {
        let cache = PropagatorCache::new();
        let params = ModelParams::new(3, 1.0, 0.2, 0.5);
        let a = cache.get_or_build(&params, 10, Method::SplitStep).unwrap();
        let b = cache.get_or_build(&params, 10, Method::SplitStep).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let c = cache.get_or_build(&params.with_bz(0.3), 10, Method::SplitStep).unwrap();
        assert!(!Arc::ptr_eq(&a, &c));
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn eigenstate_carries_no_information() {
        let params = ModelParams::new(8, 0.0, 0.9, 0.0);
        let psi0 = StateVector::basis(9, 0).unwrap();
        let cache = PropagatorCache::new();
        let d = derivative_state(&params, &psi0, 3, 1e-5, &DerivativeOptions::default(), &cache).unwrap();
        // d psi = -i J t psi for |J, J>.
        let t = 3.0 * params.period();
        for (dp, p) in d.dpsi.iter().zip(d.psi_f.amplitudes()) {
            let expected = C64::new(0.0, -4.0 * t) * p;
            assert_abs_diff_eq!((dp - expected).norm(), 0.0, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(metrology::qfi(&d.psi_f, &d.dpsi).unwrap().value, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn tiny_epsilon_is_rejected() {
        let params = ModelParams::new(4, 0.0, 0.9, 0.0);
        let psi0 = coherent_state(&SpinSystem::new(4).unwrap(), PI / 2.0, 0.0).unwrap();
        let cache = PropagatorCache::new();
        let r = derivative_state(&params, &psi0, 1, 1e-300, &DerivativeOptions::default(), &cache);
        assert!(matches!(r, Err(Error::EpsilonTooSmall { .. })));
    }

    #[test]
    fn floquet_of_static_field() {
        let params = ModelParams::new(4, 0.0, 0.5, 0.0);
        let u = period_propagator(&params, 10, Method::SplitStep).unwrap();
        let hf = floquet_hamiltonian(&u).unwrap();
        let (_, ops) = build_spin_system(4).unwrap();
        assert!(max_diff(&hf.h, &(&ops.sz * C64::new(0.5, 0.0))) < 1e-9);
        assert_eq!(hf.branch_cut_hits, 0);
    }

    #[test]
    fn floquet_of_identity_is_zero() {
        let params = ModelParams::new(3, 0.0, 0.0, 0.0);
        let u = period_propagator(&params, 10, Method::SplitStep).unwrap();
        let hf = floquet_hamiltonian(&u).unwrap();
        assert!(hf.h.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn floquet_round_trip() {
        let params = ModelParams::new(6, 10.0, PI / 2.0, 1.5);
        let u = period_propagator(&params, 1000, Method::SplitStep).unwrap();
        let hf = floquet_hamiltonian(&u).unwrap();
        let back = hermitian_exp(&hf.h, params.period()).unwrap();
        assert!(max_diff(&back, &u.u) < 1e-8);
    }

    #[test]
    fn branch_cut_is_flagged() {
        // bz T = pi puts the m = +-1 phases exactly on the cut.
        let params = ModelParams::new(2, 0.0, PI, 0.0);
        let u = period_propagator(&params, 4, Method::SplitStep).unwrap();
        let hf = floquet_hamiltonian(&u).unwrap();
        assert_eq!(hf.branch_cut_hits, 2);
        assert!(hf.quasienergies.iter().all(|e| *e <= 1e-12));
    }
}
