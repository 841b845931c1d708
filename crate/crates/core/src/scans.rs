//! Experiment drivers: phase-space maps, scaling and parameter sweeps, line
//! cuts, chaos classification and log-log fits.

use std::collections::HashSet;
use std::f64::consts::TAU;

use log::warn;
use ndarray::{Array1, Array2, Axis as NdAxis};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::{self, PoincareSection};
use crate::metrology::{self, AngularGrid, DEFAULT_PROBABILITY_FLOOR};
use crate::propagation::{
    derivative_state, evolve_with, scaled_epsilon, DerivativeOptions, EvolutionOptions, ModelParams,
    PowerLadder, PropagatorCache, Schedule, Strategy, DEFAULT_EPSILON, DEFAULT_RICHARDSON_TOLERANCE,
};
use crate::spin::{self, build_spin_system, coherent_state, Axis, SpinSystem, StateVector};

/// Bound on `epsilon * t * J` used to shrink the finite-difference step at long times.
pub const DEFAULT_EPSILON_BUDGET: f64 = 1e-3;
/// First period included in time fits.
pub const DEFAULT_TIME_FIT_START: u64 = 32;

/// Initial spin coherent state `(theta, phi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub theta: f64,
    pub phi: f64,
}

impl Seed {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn state(&self, n_atoms: usize) -> Result<StateVector> {
        coherent_state(&SpinSystem::new(n_atoms)?, self.theta, self.phi)
    }
}

/// Numerical settings shared by every sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepOptions {
    pub evolution: EvolutionOptions,
    /// Largest finite-difference step; shortened at long times.
    pub epsilon: f64,
    pub epsilon_budget: f64,
    pub richardson: bool,
    pub richardson_tolerance: f64,
    pub probability_floor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            evolution: EvolutionOptions::default(),
            epsilon: DEFAULT_EPSILON,
            epsilon_budget: DEFAULT_EPSILON_BUDGET,
            richardson: true,
            richardson_tolerance: DEFAULT_RICHARDSON_TOLERANCE,
            probability_floor: DEFAULT_PROBABILITY_FLOOR,
        }
    }
}

impl SweepOptions {
    /// Step actually used for a horizon of `n_periods`.
    pub fn epsilon_for(&self, params: &ModelParams, n_periods: u64) -> f64 {
        scaled_epsilon(self.epsilon, params, n_periods, self.epsilon_budget)
    }
}

/// Quantities a sweep can compute at each point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Qfi,
    FiX,
    FiY,
    FiZ,
    /// `<S_z>` and `<S_z^2>` of the final state.
    SzMoments,
    /// Error-propagation uncertainty of `B_z` from an `S_z` readout.
    DeltaBz,
}

impl Output {
    pub const ALL: [Output; 6] = [Output::Qfi, Output::FiX, Output::FiY, Output::FiZ, Output::SzMoments, Output::DeltaBz];

    pub fn name(&self) -> &'static str {
        match self {
            Output::Qfi => "qfi",
            Output::FiX => "fi_x",
            Output::FiY => "fi_y",
            Output::FiZ => "fi_z",
            Output::SzMoments => "s_z_moments",
            Output::DeltaBz => "delta_bz",
        }
    }
}

impl std::str::FromStr for Output {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Output::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::invalid("outputs", format!("unknown output `{s}`")))
    }
}

/// Scalar extracted from a [`PointRecord`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Qfi,
    FiX,
    FiY,
    FiZ,
    SzMean,
    Sz2Mean,
    DeltaBz,
    /// `(Delta B_z)^2`.
    DeltaBzSquared,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Qfi => "qfi",
            Metric::FiX => "fi_x",
            Metric::FiY => "fi_y",
            Metric::FiZ => "fi_z",
            Metric::SzMean => "sz_mean",
            Metric::Sz2Mean => "sz2_mean",
            Metric::DeltaBz => "delta_bz",
            Metric::DeltaBzSquared => "delta_bz_squared",
        }
    }

    pub fn required_output(&self) -> Output {
        match self {
            Metric::Qfi => Output::Qfi,
            Metric::FiX => Output::FiX,
            Metric::FiY => Output::FiY,
            Metric::FiZ => Output::FiZ,
            Metric::SzMean | Metric::Sz2Mean => Output::SzMoments,
            Metric::DeltaBz | Metric::DeltaBzSquared => Output::DeltaBz,
        }
    }

    pub fn fi(axis: Axis) -> Self {
        match axis {
            Axis::X => Metric::FiX,
            Axis::Y => Metric::FiY,
            Axis::Z => Metric::FiZ,
        }
    }

    /// Whether larger values are better when picking an optimum.
    pub fn maximize(&self) -> bool {
        !matches!(self, Metric::DeltaBz | Metric::DeltaBzSquared)
    }

    pub fn extract(&self, r: &PointRecord) -> Option<f64> {
        match self {
            Metric::Qfi => r.qfi,
            Metric::FiX => r.fi[0],
            Metric::FiY => r.fi[1],
            Metric::FiZ => r.fi[2],
            Metric::SzMean => r.sz_mean,
            Metric::Sz2Mean => r.sz2_mean,
            Metric::DeltaBz => r.delta_bz,
            Metric::DeltaBzSquared => r.delta_bz.map(|d| d * d),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Metric::Qfi,
            Metric::FiX,
            Metric::FiY,
            Metric::FiZ,
            Metric::SzMean,
            Metric::Sz2Mean,
            Metric::DeltaBz,
            Metric::DeltaBzSquared,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::invalid("metric", format!("unknown metric `{s}`")))
    }
}

/// Everything computed at one parameter point, with its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointRecord {
    pub params: ModelParams,
    pub seed: Seed,
    pub n_periods: u64,
    pub epsilon: f64,
    pub qfi: Option<f64>,
    /// Fisher information for `x`, `y`, `z` readouts.
    pub fi: [Option<f64>; 3],
    pub sz_mean: Option<f64>,
    pub sz2_mean: Option<f64>,
    pub delta_bz: Option<f64>,
    pub richardson_ok: Option<bool>,
    pub fi_flagged: bool,
    pub warnings: Vec<String>,
}

fn axis_index(axis: Axis) -> usize {
    match axis {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::Z => 2,
    }
}

fn fi_axis(output: Output) -> Option<Axis> {
    match output {
        Output::FiX => Some(Axis::X),
        Output::FiY => Some(Axis::Y),
        Output::FiZ => Some(Axis::Z),
        _ => None,
    }
}

/// Fills the requested outputs from the final states at `B_z`, `B_z +/- epsilon`.
fn fill_record(
    record: &mut PointRecord,
    outputs: &[Output],
    psi_f: &StateVector,
    psi_plus: &StateVector,
    psi_minus: &StateVector,
    floor: f64,
) -> Result<()> {
    let epsilon = record.epsilon;
    for &output in outputs {
        if let Some(axis) = fi_axis(output) {
            let fi = metrology::fisher_information(axis, psi_plus, psi_minus, epsilon, floor)?;
            record.fi[axis_index(axis)] = Some(fi.value);
            if fi.flagged {
                record.fi_flagged = true;
                record.warnings.push(format!("fi_{axis}: probability floor excluded a significant outcome"));
            }
        }
    }
    let wants_sz = outputs.iter().any(|o| matches!(o, Output::SzMoments | Output::DeltaBz));
    if wants_sz {
        let (_, ops) = build_spin_system(record.params.n_atoms)?;
        if outputs.contains(&Output::SzMoments) {
            record.sz_mean = Some(spin::expectation(psi_f, &ops.sz)?);
            record.sz2_mean = Some(spin::expectation(psi_f, &ops.sz2)?);
        }
        if outputs.contains(&Output::DeltaBz) {
            let ep = metrology::error_propagation(&ops.sz, psi_plus, psi_minus, psi_f, epsilon)?;
            record.delta_bz = Some(ep.delta_bz);
        }
    }
    Ok(())
}

fn empty_record(params: &ModelParams, seed: Seed, n_periods: u64, epsilon: f64) -> PointRecord {
    PointRecord {
        params: *params,
        seed,
        n_periods,
        epsilon,
        qfi: None,
        fi: [None; 3],
        sz_mean: None,
        sz2_mean: None,
        delta_bz: None,
        richardson_ok: None,
        fi_flagged: false,
        warnings: Vec::new(),
    }
}

/// Evaluates `outputs` after `n_periods` from `SCS(seed)` at `params`.
///
/// All derivatives share one `epsilon` so that `FI <= QFI` comparisons are
/// made on identical finite differences.
pub fn evaluate_point(
    params: &ModelParams,
    seed: Seed,
    n_periods: u64,
    outputs: &[Output],
    opts: &SweepOptions,
    cache: &PropagatorCache,
) -> Result<PointRecord> {
    let psi0 = seed.state(params.n_atoms)?;
    let epsilon = opts.epsilon_for(params, n_periods);
    let mut record = empty_record(params, seed, n_periods, epsilon);
    if n_periods == 0 {
        // Nothing has evolved yet, so nothing depends on B_z.
        return zero_time_record(record, outputs, &psi0);
    }
    let wants_qfi = outputs.contains(&Output::Qfi);
    let dopts = DerivativeOptions {
        evolution: opts.evolution.clone(),
        richardson: opts.richardson && wants_qfi,
        richardson_tolerance: opts.richardson_tolerance,
    };
    let d = derivative_state(params, &psi0, n_periods, epsilon, &dopts, cache)?;
    if wants_qfi {
        let q = metrology::qfi_of(&d)?;
        record.qfi = Some(q.value);
        if let Some(r) = &d.richardson {
            record.richardson_ok = Some(r.passed);
        }
    }
    if let Some(w) = &d.warning {
        record.warnings.push(w.clone());
    }
    fill_record(&mut record, outputs, &d.psi_f, &d.psi_plus, &d.psi_minus, opts.probability_floor)?;
    Ok(record)
}

fn zero_time_record(mut record: PointRecord, outputs: &[Output], psi0: &StateVector) -> Result<PointRecord> {
    for &output in outputs {
        match output {
            Output::Qfi => record.qfi = Some(0.0),
            Output::FiX | Output::FiY | Output::FiZ => {
                record.fi[axis_index(fi_axis(output).expect("fi output"))] = Some(0.0)
            }
            Output::SzMoments => {
                let (_, ops) = build_spin_system(record.params.n_atoms)?;
                record.sz_mean = Some(spin::expectation(psi0, &ops.sz)?);
                record.sz2_mean = Some(spin::expectation(psi0, &ops.sz2)?);
            }
            Output::DeltaBz => record.delta_bz = Some(f64::INFINITY),
        }
    }
    Ok(record)
}

/// Records at each period count in `periods` (strictly increasing), sharing
/// one propagator per `B_z` value and one `epsilon` sized for the longest time.
pub fn time_series(
    params: &ModelParams,
    seed: Seed,
    periods: &[u64],
    outputs: &[Output],
    opts: &SweepOptions,
    cache: &PropagatorCache,
) -> Result<Vec<PointRecord>> {
    if periods.is_empty() {
        return Err(Error::invalid("periods", "at least one time is required"));
    }
    if periods.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("periods", "must be strictly increasing"));
    }
    if periods[0] == 0 {
        return Err(Error::invalid("periods", "must be positive"));
    }
    let horizon = *periods.last().expect("non-empty");
    let psi0 = seed.state(params.n_atoms)?;
    let epsilon = opts.epsilon_for(params, horizon);
    let schedule = Schedule::At(periods.to_vec());
    let evolve = |bz: f64| -> Result<Vec<StateVector>> {
        Ok(evolve_with(&params.with_bz(bz), &psi0, horizon, &schedule, &opts.evolution, cache)?.states)
    };
    let mid = evolve(params.bz)?;
    let plus = evolve(params.bz + epsilon)?;
    let minus = evolve(params.bz - epsilon)?;
    let wants_qfi = outputs.contains(&Output::Qfi);
    let halves = if wants_qfi && opts.richardson {
        Some((evolve(params.bz + epsilon / 2.0)?, evolve(params.bz - epsilon / 2.0)?))
    } else {
        None
    };
    let mut records = Vec::with_capacity(periods.len());
    for (i, &n) in periods.iter().enumerate() {
        let mut record = empty_record(params, seed, n, epsilon);
        if wants_qfi {
            let dpsi = central(&plus[i], &minus[i], epsilon);
            let q = metrology::qfi(&mid[i], &dpsi)?.value;
            record.qfi = Some(q);
            if let Some((hp, hm)) = &halves {
                let half = metrology::qfi(&mid[i], &central(&hp[i], &hm[i], epsilon / 2.0))?.value;
                let scale = q.abs().max(half.abs());
                let ok = scale == 0.0 || (q - half).abs() <= opts.richardson_tolerance * scale || (q - half).abs() < 1e-8;
                record.richardson_ok = Some(ok);
                if !ok {
                    record.warnings.push(format!("Richardson check failed at {n} periods: {q:.6e} vs {half:.6e}"));
                }
            }
        }
        fill_record(&mut record, outputs, &mid[i], &plus[i], &minus[i], opts.probability_floor)?;
        records.push(record);
    }
    Ok(records)
}

fn central(plus: &StateVector, minus: &StateVector, epsilon: f64) -> Array1<C64> {
    (plus.amplitudes() - minus.amplitudes()).mapv(|v| v / (2.0 * epsilon))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingVariable {
    /// Evolution time in drive periods.
    Time,
    /// Particle number.
    Atoms,
}

impl std::str::FromStr for ScalingVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(ScalingVariable::Time),
            "atoms" => Ok(ScalingVariable::Atoms),
            other => Err(Error::invalid("variable", format!("unknown scaling variable `{other}`"))),
        }
    }
}

/// A figure of merit against time or particle number.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub variable: ScalingVariable,
    pub metric: Metric,
    /// Time `n T` or `N`, strictly increasing.
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub records: Vec<PointRecord>,
    /// Sample points that failed, with the reason.
    pub failures: Vec<(f64, String)>,
}

impl ScalingSeries {
    /// Log-log fit restricted to `xs >= x_min`.
    pub fn fit_from(&self, x_min: f64) -> Result<FitResult> {
        let start = self.xs.iter().position(|&x| x >= x_min).ok_or_else(|| {
            Error::invalid("fit_range", format!("no samples at or beyond {x_min}"))
        })?;
        loglog_fit(&self.xs, &self.ys, Some((start, self.xs.len() - 1)))
    }
}

fn series_from(variable: ScalingVariable, metric: Metric, xs: Vec<f64>, rows: Vec<Result<PointRecord>>) -> ScalingSeries {
    let mut series = ScalingSeries { variable, metric, xs: Vec::new(), ys: Vec::new(), records: Vec::new(), failures: Vec::new() };
    for (x, row) in xs.into_iter().zip(rows) {
        match row.and_then(|r| {
            metric
                .extract(&r)
                .filter(|v| v.is_finite())
                .map(|v| (v, r))
                .ok_or_else(|| Error::Numerical(format!("{} unavailable", metric.name())))
        }) {
            Ok((y, r)) => {
                series.xs.push(x);
                series.ys.push(y);
                series.records.push(r);
            }
            Err(e) => {
                warn!("scaling point {x} failed: {e}");
                series.failures.push((x, e.to_string()));
            }
        }
    }
    series
}

/// `metric` at each period count, all from shared propagators.
pub fn time_scaling(
    params: &ModelParams,
    seed: Seed,
    periods: &[u64],
    metric: Metric,
    opts: &SweepOptions,
    cache: &PropagatorCache,
) -> Result<ScalingSeries> {
    let records = time_series(params, seed, periods, &[metric.required_output()], opts, cache)?;
    let xs = periods.iter().map(|&n| n as f64 * params.period()).collect();
    Ok(series_from(ScalingVariable::Time, metric, xs, records.into_iter().map(Ok).collect()))
}

/// `metric` after `n_periods` for each particle number; failures are isolated per `N`.
pub fn atom_scaling(
    params: &ModelParams,
    seed: Seed,
    n_periods: u64,
    atoms: &[usize],
    metric: Metric,
    opts: &SweepOptions,
    cache: &PropagatorCache,
) -> Result<ScalingSeries> {
    if atoms.is_empty() || atoms.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("atoms", "must be non-empty and strictly increasing"));
    }
    let outputs = [metric.required_output()];
    let rows: Vec<Result<PointRecord>> = atoms
        .par_iter()
        .map(|&n| evaluate_point(&params.with_n_atoms(n), seed, n_periods, &outputs, opts, cache))
        .collect();
    let xs = atoms.iter().map(|&n| n as f64).collect();
    Ok(series_from(ScalingVariable::Atoms, metric, xs, rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Chi,
    Bz,
}

impl SweepVariable {
    pub fn apply(&self, params: &ModelParams, value: f64) -> ModelParams {
        match self {
            SweepVariable::Chi => params.with_chi(value),
            SweepVariable::Bz => params.with_bz(value),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::Chi => "chi",
            SweepVariable::Bz => "bz",
        }
    }
}

/// One row per swept value; failed rows keep their error text.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepTable {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub outputs: Vec<Output>,
    pub rows: Vec<std::result::Result<PointRecord, String>>,
}

impl SweepTable {
    /// Index and value of the best finite `metric` (largest, or smallest for uncertainties).
    pub fn optimum(&self, metric: Metric) -> Option<(usize, f64)> {
        let candidates = self.rows.iter().enumerate().filter_map(|(i, r)| {
            r.as_ref().ok().and_then(|r| metric.extract(r)).filter(|v| v.is_finite()).map(|v| (i, v))
        });
        if metric.maximize() {
            candidates.max_by(|a, b| a.1.total_cmp(&b.1))
        } else {
            candidates.min_by(|a, b| a.1.total_cmp(&b.1))
        }
    }
}

/// Evaluates `outputs` for each value of `variable`.
pub fn parameter_sweep(
    variable: SweepVariable,
    values: &[f64],
    params: &ModelParams,
    seed: Seed,
    n_periods: u64,
    outputs: &[Output],
    opts: &SweepOptions,
    cache: &PropagatorCache,
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::invalid("values", "at least one sweep value is required"));
    }
    if outputs.is_empty() {
        return Err(Error::invalid("outputs", "at least one output is required"));
    }
    let rows = values
        .par_iter()
        .map(|&v| {
            evaluate_point(&variable.apply(params, v), seed, n_periods, outputs, opts, cache).map_err(|e| {
                warn!("{} = {v}: {e}", variable.name());
                e.to_string()
            })
        })
        .collect();
    Ok(SweepTable { variable, values: values.to_vec(), outputs: outputs.to_vec(), rows })
}

/// Final states after `n_periods` for every seed, via one `U^n`.
pub fn final_states_batch(
    params: &ModelParams,
    seeds: &[Seed],
    n_periods: u64,
    opts: &EvolutionOptions,
    cache: &PropagatorCache,
) -> Result<Vec<StateVector>> {
    let system = SpinSystem::new(params.n_atoms)?;
    let initial: Vec<StateVector> = seeds
        .par_iter()
        .map(|s| coherent_state(&system, s.theta, s.phi))
        .collect::<Result<_>>()?;
    if n_periods == 0 {
        return Ok(initial);
    }
    let dim = system.dim();
    let direct = match opts.strategy {
        Strategy::Direct => true,
        Strategy::Propagator => false,
        Strategy::Auto => (n_periods as usize).saturating_mul(seeds.len()).saturating_mul(2) < dim,
    };
    if direct {
        let single = EvolutionOptions { strategy: Strategy::Direct, ..opts.clone() };
        return initial
            .par_iter()
            .map(|psi| Ok(evolve_with(params, psi, n_periods, &Schedule::Final, &single, cache)?.states.remove(0)))
            .collect();
    }
    let u = cache.get_or_build(params, opts.steps, opts.method)?;
    let un = PowerLadder::new(&u.u).matrix(n_periods);
    let mut batch = Array2::<C64>::zeros((dim, seeds.len()));
    for (mut col, psi) in batch.axis_iter_mut(NdAxis(1)).zip(&initial) {
        col.assign(psi.amplitudes());
    }
    let evolved = un.dot(&batch);
    evolved
        .axis_iter(NdAxis(1))
        .map(|col| StateVector::normalized(col.to_owned()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseQuantity {
    Entropy,
    Fidelity,
    Qfi,
}

impl PhaseQuantity {
    pub fn name(&self) -> &'static str {
        match self {
            PhaseQuantity::Entropy => "entropy",
            PhaseQuantity::Fidelity => "fidelity",
            PhaseQuantity::Qfi => "qfi",
        }
    }
}

impl std::str::FromStr for PhaseQuantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(PhaseQuantity::Entropy),
            "fidelity" => Ok(PhaseQuantity::Fidelity),
            "qfi" => Ok(PhaseQuantity::Qfi),
            other => Err(Error::invalid("quantity", format!("unknown quantity `{other}`"))),
        }
    }
}

/// A figure of merit over initial coherent states.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseMap {
    pub quantity: PhaseQuantity,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// `values[[i, j]]` for `(thetas[i], phis[j])`; NaN where the point failed.
    pub values: Array2<f64>,
    pub missing: Vec<(usize, usize, String)>,
    pub params: ModelParams,
    pub n_periods: u64,
    pub epsilon: Option<f64>,
}

impl PhaseMap {
    pub fn n_atoms(&self) -> usize {
        self.params.n_atoms
    }

    /// Row-major `(theta, phi, value)` triples.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values.indexed_iter().map(|((i, j), v)| (self.thetas[i], self.phis[j], *v))
    }
}

fn grid_seeds(grid: &AngularGrid) -> Vec<Seed> {
    grid.thetas
        .iter()
        .flat_map(|&t| grid.phis.iter().map(move |&p| Seed::new(t, p)))
        .collect()
}

/// Figure of merit for every grid point as initial state, from shared
/// propagators (plus the `+/- epsilon` pair for the QFI).
pub fn phase_map(
    quantity: PhaseQuantity,
    grid: &AngularGrid,
    params: &ModelParams,
    n_periods: u64,
    opts: &SweepOptions,
    cache: &PropagatorCache,
) -> Result<PhaseMap> {
    params.validate()?;
    let seeds = grid_seeds(grid);
    let (rows, cols) = (grid.thetas.len(), grid.phis.len());
    let system = SpinSystem::new(params.n_atoms)?;
    let mut epsilon = None;
    let values: Vec<Result<f64>> = match quantity {
        PhaseQuantity::Entropy => {
            let (_, ops) = build_spin_system(params.n_atoms)?;
            let finals = final_states_batch(params, &seeds, n_periods, &opts.evolution, cache)?;
            finals.par_iter().map(|psi| metrology::linear_entropy(psi, &ops)).collect()
        }
        PhaseQuantity::Fidelity => {
            let finals = final_states_batch(params, &seeds, n_periods, &opts.evolution, cache)?;
            seeds
                .par_iter()
                .zip(finals.par_iter())
                .map(|(s, psi)| metrology::fidelity(&coherent_state(&system, s.theta, s.phi)?, psi))
                .collect()
        }
        PhaseQuantity::Qfi => {
            if n_periods == 0 {
                vec![0.0; seeds.len()].into_iter().map(Ok).collect()
            } else {
                let eps = opts.epsilon_for(params, n_periods);
                epsilon = Some(eps);
                let mid = final_states_batch(params, &seeds, n_periods, &opts.evolution, cache)?;
                let plus = final_states_batch(&params.with_bz(params.bz + eps), &seeds, n_periods, &opts.evolution, cache)?;
                let minus = final_states_batch(&params.with_bz(params.bz - eps), &seeds, n_periods, &opts.evolution, cache)?;
                (0..seeds.len())
                    .into_par_iter()
                    .map(|k| Ok(metrology::qfi(&mid[k], &central(&plus[k], &minus[k], eps))?.value))
                    .collect()
            }
        }
    };
    let mut grid_values = Array2::from_elem((rows, cols), f64::NAN);
    let mut missing = Vec::new();
    for (k, v) in values.into_iter().enumerate() {
        let (i, j) = (k / cols, k % cols);
        match v {
            Ok(x) if x.is_finite() => grid_values[[i, j]] = x,
            Ok(x) => missing.push((i, j, format!("non-finite value {x}"))),
            Err(e) => missing.push((i, j, e.to_string())),
        }
    }
    if !missing.is_empty() {
        warn!("{} of {} phase-map points failed", missing.len(), seeds.len());
    }
    Ok(PhaseMap {
        quantity,
        thetas: grid.thetas.clone(),
        phis: grid.phis.clone(),
        values: grid_values,
        missing,
        params: *params,
        n_periods,
        epsilon,
    })
}

/// Box-counting classifier for stroboscopic trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChaosClassifier {
    pub phi_boxes: usize,
    pub z_boxes: usize,
    /// A trajectory visiting more than this many boxes is chaotic.
    pub threshold: usize,
}

impl Default for ChaosClassifier {
    fn default() -> Self {
        Self { phi_boxes: 50, z_boxes: 50, threshold: 100 }
    }
}

impl ChaosClassifier {
    /// Distinct `(phi, z)` boxes visited.
    pub fn box_count(&self, points: &[(f64, f64)]) -> usize {
        let boxes: HashSet<(usize, usize)> = points
            .iter()
            .map(|&(phi, z)| {
                let i = ((phi.rem_euclid(TAU) / TAU) * self.phi_boxes as f64) as usize;
                let j = (((z + 1.0) / 2.0) * self.z_boxes as f64) as usize;
                (i.min(self.phi_boxes - 1), j.min(self.z_boxes - 1))
            })
            .collect();
        boxes.len()
    }

    pub fn is_chaotic(&self, points: &[(f64, f64)]) -> bool {
        self.box_count(points) > self.threshold
    }
}

/// Fraction of (non-aborted) trajectories classified as chaotic.
pub fn chaos_fraction(section: &PoincareSection, classifier: &ChaosClassifier) -> f64 {
    let valid: Vec<_> = section.trajectories.iter().filter(|t| t.aborted.is_none()).collect();
    if valid.is_empty() {
        return 0.0;
    }
    let chaotic = valid.iter().filter(|t| classifier.is_chaotic(&t.points)).count();
    chaotic as f64 / valid.len() as f64
}

/// Classical box counts for each grid point mapped onto the mean-field phase space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OccupancyMap {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    pub counts: Array2<f64>,
    pub chaotic: Array2<bool>,
}

pub fn classical_occupancy_map(
    grid: &AngularGrid,
    params: &ModelParams,
    n_periods: usize,
    steps_per_period: usize,
    classifier: &ChaosClassifier,
) -> Result<OccupancyMap> {
    let seeds = grid_seeds(grid);
    let initials: Vec<_> = seeds.iter().map(|s| meanfield::bloch_to_classical(s.theta, s.phi)).collect();
    let section = meanfield::poincare_section(&initials, params, n_periods, steps_per_period)?;
    let shape = (grid.thetas.len(), grid.phis.len());
    let counts: Vec<f64> = section.trajectories.iter().map(|t| classifier.box_count(&t.points) as f64).collect();
    let chaotic = counts.iter().map(|&c| c > classifier.threshold as f64).collect();
    Ok(OccupancyMap {
        thetas: grid.thetas.clone(),
        phis: grid.phis.clone(),
        counts: Array2::from_shape_vec(shape, counts).expect("grid shape"),
        chaotic: Array2::from_shape_vec(shape, chaotic).expect("grid shape"),
    })
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let average = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = average;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 { 0.0 } else { cov / (va * vb).sqrt() }
}

/// Spearman rank correlation over pairs where both values are finite.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let (fa, fb): (Vec<f64>, Vec<f64>) =
        a.iter().zip(b).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (*x, *y)).unzip();
    if fa.len() < 2 {
        return Err(Error::invalid("data", "need at least two finite pairs"));
    }
    Ok(pearson(&ranks(&fa), &ranks(&fb)))
}

/// Median of the finite entries.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// `value > median`; non-finite entries map to `false`.
pub fn binarize_at_median(values: &[f64]) -> Vec<bool> {
    match median(values) {
        Some(m) => values.iter().map(|&x| x.is_finite() && x > m).collect(),
        None => vec![false; values.len()],
    }
}

/// `|A and B| / |A or B|`; 1 when both sets are empty.
pub fn jaccard(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Initial states representing the three dynamical regimes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeSeeds {
    pub chaotic_sea: Seed,
    pub edge: Seed,
    pub regular_island: Seed,
}

fn unit_vector(s: Seed) -> [f64; 3] {
    let (st, ct) = s.theta.sin_cos();
    [st * s.phi.cos(), st * s.phi.sin(), ct]
}

/// Member of `points` with the least summed chord distance to the others.
fn medoid(points: &[Seed]) -> Option<Seed> {
    let vecs: Vec<[f64; 3]> = points.iter().map(|&s| unit_vector(s)).collect();
    let cost = |a: &[f64; 3]| -> f64 {
        vecs.iter().map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()).sum()
    };
    (0..points.len())
        .map(|i| (i, cost(&vecs[i])))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| points[i])
}

fn decile_cut(values: &mut [f64], upper: bool) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let k = ((n as f64) * 0.1).ceil().max(1.0) as usize;
    if upper { values[n - k] } else { values[k - 1] }
}

/// Edge: QFI maximum on the chaotic/regular boundary band. Chaotic sea:
/// medoid of the top-decile QFI chaotic points. Regular island: medoid of the
/// bottom-decile QFI regular points.
pub fn select_representative_seeds(qfi: &PhaseMap, chaotic: &Array2<bool>) -> Result<RepresentativeSeeds> {
    if qfi.values.raw_dim() != chaotic.raw_dim() {
        return Err(Error::DimensionMismatch { expected: qfi.values.len(), found: chaotic.len() });
    }
    let (rows, cols) = qfi.values.dim();
    let seed_at = |i: usize, j: usize| Seed::new(qfi.thetas[i], qfi.phis[j]);
    let mut band = Vec::new();
    let mut sea = Vec::new();
    let mut island = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let v = qfi.values[[i, j]];
            if !v.is_finite() {
                continue;
            }
            let here = chaotic[[i, j]];
            let mut neighbours = vec![(i, (j + 1) % cols), (i, (j + cols - 1) % cols)];
            if i > 0 {
                neighbours.push((i - 1, j));
            }
            if i + 1 < rows {
                neighbours.push((i + 1, j));
            }
            if neighbours.iter().any(|&(a, b)| chaotic[[a, b]] != here) {
                band.push((i, j, v));
            }
            if here { sea.push((i, j, v)) } else { island.push((i, j, v)) }
        }
    }
    if sea.is_empty() || island.is_empty() || band.is_empty() {
        return Err(Error::invalid("chaotic", "map needs both chaotic and regular points"));
    }
    let edge = band.iter().max_by(|a, b| a.2.total_cmp(&b.2)).map(|&(i, j, _)| seed_at(i, j)).expect("non-empty");
    let top = decile_cut(&mut sea.iter().map(|p| p.2).collect::<Vec<_>>(), true);
    let bottom = decile_cut(&mut island.iter().map(|p| p.2).collect::<Vec<_>>(), false);
    let sea_pts: Vec<Seed> = sea.iter().filter(|p| p.2 >= top).map(|&(i, j, _)| seed_at(i, j)).collect();
    let island_pts: Vec<Seed> = island.iter().filter(|p| p.2 <= bottom).map(|&(i, j, _)| seed_at(i, j)).collect();
    Ok(RepresentativeSeeds {
        chaotic_sea: medoid(&sea_pts).expect("top decile non-empty"),
        edge,
        regular_island: medoid(&island_pts).expect("bottom decile non-empty"),
    })
}

/// Linear entropy against `theta` at fixed `phi`, for one particle number.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub n_atoms: usize,
    pub phi: f64,
    pub thetas: Vec<f64>,
    pub entropy: Vec<f64>,
}

impl EntropyCurve {
    /// Largest `|dS/dtheta|` by forward differences.
    pub fn max_slope(&self) -> f64 {
        self.thetas
            .windows(2)
            .zip(self.entropy.windows(2))
            .map(|(t, s)| ((s[1] - s[0]) / (t[1] - t[0])).abs())
            .fold(0.0, f64::max)
    }

    /// `theta` with the lowest entropy.
    pub fn argmin(&self) -> Option<f64> {
        self.entropy
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| self.thetas[i])
    }
}

/// One entropy-vs-theta curve per particle number along the line `phi`.
pub fn entropy_line_cut(
    phi: f64,
    thetas: &[f64],
    params: &ModelParams,
    n_periods: u64,
    atoms: &[usize],
    opts: &EvolutionOptions,
    cache: &PropagatorCache,
) -> Result<Vec<EntropyCurve>> {
    if thetas.is_empty() || atoms.is_empty() {
        return Err(Error::invalid("line_cut", "theta values and particle numbers must be non-empty"));
    }
    let seeds: Vec<Seed> = thetas.iter().map(|&t| Seed::new(t, phi)).collect();
    atoms
        .iter()
        .map(|&n| {
            let p = params.with_n_atoms(n);
            let (_, ops) = build_spin_system(n)?;
            let finals = final_states_batch(&p, &seeds, n_periods, opts, cache)?;
            let entropy = finals.iter().map(|psi| metrology::linear_entropy(psi, &ops)).collect::<Result<_>>()?;
            Ok(EntropyCurve { n_atoms: n, phi, thetas: thetas.to_vec(), entropy })
        })
        .collect()
}

/// Ordinary least squares on `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Inclusive index window used.
    pub fit_range: (usize, usize),
}

pub fn loglog_fit(xs: &[f64], ys: &[f64], range: Option<(usize, usize)>) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.is_empty() {
        return Err(Error::invalid("xs", "no data"));
    }
    let (lo, hi) = range.unwrap_or((0, xs.len() - 1));
    if lo > hi || hi >= xs.len() {
        return Err(Error::invalid("fit_range", format!("({lo}, {hi}) outside 0..{}", xs.len())));
    }
    if hi - lo < 1 {
        return Err(Error::invalid("fit_range", "needs at least two points"));
    }
    let bad: Vec<usize> = (lo..=hi).filter(|&i| !(xs[i] > 0.0 && ys[i] > 0.0)).collect();
    if !bad.is_empty() {
        return Err(Error::NonPositiveData { indices: bad });
    }
    let lx: Vec<f64> = xs[lo..=hi].iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys[lo..=hi].iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("xs", "all abscissae coincide"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(FitResult { slope, intercept, r_squared, fit_range: (lo, hi) })
}

/// Powers of two `2^lo ..= 2^hi`.
pub fn power_of_two_periods(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|k| 1u64 << k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn fit_of_exact_power_law() {
        let xs: Vec<f64> = (1..=10).map(|x| x as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let f = loglog_fit(&xs, &ys, None).unwrap();
        assert_abs_diff_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        let flat = loglog_fit(&xs, &vec![3.0; 10], None).unwrap();
        assert_abs_diff_eq!(flat.slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_rejects_nonpositive() {
        let err = loglog_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, -1.0], None).unwrap_err();
        assert!(matches!(err, Error::NonPositiveData { indices } if indices == vec![1, 2]));
        assert!(loglog_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0], Some((2, 2))).is_err());
    }

    #[test]
    fn spearman_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(rank_correlation(&a, &[10.0, 20.0, 25.0, 100.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rank_correlation(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![1.5, 0.0, 1.5]);
    }

    #[test]
    fn jaccard_and_median() {
        assert_eq!(jaccard(&[true, true, false], &[true, false, false]).unwrap(), 0.5);
        assert_eq!(jaccard(&[false], &[false]).unwrap(), 1.0);
        assert_eq!(median(&[3.0, 1.0, f64::NAN, 2.0]), Some(2.0));
        assert_eq!(binarize_at_median(&[1.0, 2.0, 3.0, 4.0]), vec![false, false, true, true]);
    }

    #[test]
    fn classifier_counts_boxes() {
        let c = ChaosClassifier::default();
        let line: Vec<(f64, f64)> = (0..500).map(|k| (TAU * k as f64 / 500.0, 0.3)).collect();
        assert_eq!(c.box_count(&line), 50);
        assert!(!c.is_chaotic(&line));
        assert_eq!(c.box_count(&[(0.0, -1.0), (TAU - 1e-12, 1.0)]), 2);
    }

    #[test]
    fn undriven_section_is_regular() {
        let seeds = meanfield::seed_grid(6, 6, 0.98).unwrap();
        let params = ModelParams::new(1, 10.0, FRAC_PI_2, 0.0);
        let s = meanfield::poincare_section(&seeds, &params, 100, 200).unwrap();
        assert_eq!(chaos_fraction(&s, &ChaosClassifier::default()), 0.0);
    }

    #[test]
    fn zero_time_maps_are_trivial() {
        let grid = AngularGrid::uniform(5, 6).unwrap();
        let params = ModelParams::new(8, 10.0, FRAC_PI_2, 1.5);
        let cache = PropagatorCache::new();
        let opts = SweepOptions::default();
        let e = phase_map(PhaseQuantity::Entropy, &grid, &params, 0, &opts, &cache).unwrap();
        assert!(e.values.iter().all(|v| v.abs() < 1e-10));
        let f = phase_map(PhaseQuantity::Fidelity, &grid, &params, 0, &opts, &cache).unwrap();
        assert!(f.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(cache.is_empty());
    }

    #[test]
    fn batch_matches_single_evolution() {
        let params = ModelParams::new(10, 10.0, FRAC_PI_2, 1.5);
        let cache = PropagatorCache::new();
        let opts = EvolutionOptions { steps: 100, ..Default::default() };
        let seeds = [Seed::new(0.5, 1.0), Seed::new(2.0, 4.0)];
        let batch = final_states_batch(&params, &seeds, 7, &EvolutionOptions { strategy: Strategy::Propagator, ..opts.clone() }, &cache).unwrap();
        for (s, b) in seeds.iter().zip(&batch) {
            let psi0 = s.state(10).unwrap();
            let single = evolve_with(&params, &psi0, 7, &Schedule::Final, &EvolutionOptions { strategy: Strategy::Direct, ..opts.clone() }, &cache).unwrap();
            let f = single.last().unwrap().inner(b).unwrap().norm_sqr();
            assert!(f > 1.0 - 1e-10, "{f}");
        }
    }

    #[test]
    fn free_precession_qfi_grows_quadratically() {
        let n = 20;
        let params = ModelParams::new(n, 0.0, 0.3, 0.0);
        let cache = PropagatorCache::new();
        let opts = SweepOptions { evolution: EvolutionOptions { steps: 50, ..Default::default() }, ..Default::default() };
        let series = time_scaling(&params, Seed::new(FRAC_PI_2, 0.0), &power_of_two_periods(0, 6), Metric::Qfi, &opts, &cache).unwrap();
        for (x, y) in series.xs.iter().zip(&series.ys) {
            assert!((y / (n as f64 * x * x) - 1.0).abs() < 1e-3);
        }
        let fit = series.fit_from(1.0).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-3);
        assert!(series.records.iter().all(|r| r.richardson_ok == Some(true)));
    }

    #[test]
    fn time_series_matches_point_evaluation() {
        let params = ModelParams::new(12, 10.0, FRAC_PI_2, 1.5);
        let cache = PropagatorCache::new();
        let opts = SweepOptions { evolution: EvolutionOptions { steps: 100, ..Default::default() }, ..Default::default() };
        let seed = Seed::new(1.0, 2.0);
        let outputs = [Output::Qfi, Output::FiZ, Output::DeltaBz];
        let series = time_series(&params, seed, &[2, 5], &outputs, &opts, &cache).unwrap();
        // Same epsilon as the series, which sizes it for the longest time.
        let point_opts = SweepOptions { epsilon: series[0].epsilon, epsilon_budget: f64::INFINITY, ..opts.clone() };
        let point = evaluate_point(&params, seed, 2, &outputs, &point_opts, &cache).unwrap();
        assert_abs_diff_eq!(series[0].qfi.unwrap(), point.qfi.unwrap(), epsilon = 1e-6 * point.qfi.unwrap());
        assert_abs_diff_eq!(series[0].fi[2].unwrap(), point.fi[2].unwrap(), epsilon = 1e-6 * point.qfi.unwrap());
    }

    #[test]
    fn sweep_reports_optimum() {
        let params = ModelParams::new(6, 0.0, 0.3, 0.0);
        let cache = PropagatorCache::new();
        let opts = SweepOptions { evolution: EvolutionOptions { steps: 20, ..Default::default() }, ..Default::default() };
        let values = [0.0, 0.5, 1.0];
        let t = parameter_sweep(SweepVariable::Bz, &values, &params, Seed::new(FRAC_PI_2, 0.0), 1, &[Output::FiX, Output::DeltaBz], &opts, &cache).unwrap();
        assert_eq!(t.rows.len(), 3);
        // <S_x> = J cos(bz t): most informative where the slope is steepest.
        let (i, _) = t.optimum(Metric::FiX).unwrap();
        assert!(i > 0);
        assert!(t.optimum(Metric::DeltaBz).is_some());
    }

    #[test]
    fn line_cut_at_zero_time_is_flat() {
        let params = ModelParams::new(4, 10.0, FRAC_PI_2, 1.5);
        let cache = PropagatorCache::new();
        let curves = entropy_line_cut(PI, &[0.3, 1.0, 2.0], &params, 0, &[4, 6], &EvolutionOptions::default(), &cache).unwrap();
        assert_eq!(curves.len(), 2);
        assert!(curves.iter().all(|c| c.entropy.iter().all(|s| s.abs() < 1e-10)));
        assert!(curves[0].max_slope() < 1e-9);
    }

    #[test]
    fn seeds_follow_masks() {
        let thetas: Vec<f64> = (0..5).map(|i| 0.2 + 0.6 * i as f64).collect();
        let phis: Vec<f64> = (0..4).map(|j| TAU * j as f64 / 4.0).collect();
        let mut values = Array2::zeros((5, 4));
        let mut chaotic = Array2::from_elem((5, 4), false);
        for i in 0..5 {
            for j in 0..4 {
                chaotic[[i, j]] = i >= 3;
                values[[i, j]] = (i * 4 + j) as f64;
            }
        }
        let map = PhaseMap {
            quantity: PhaseQuantity::Qfi,
            thetas: thetas.clone(),
            phis,
            values,
            missing: vec![],
            params: ModelParams::new(4, 1.0, 1.0, 1.0),
            n_periods: 1,
            epsilon: None,
        };
        let s = select_representative_seeds(&map, &chaotic).unwrap();
        assert!(s.chaotic_sea.theta >= thetas[3]);
        assert!(s.regular_island.theta <= thetas[2]);
        assert!(s.edge.theta == thetas[2] || s.edge.theta == thetas[3]);
        assert!(select_representative_seeds(&map, &Array2::from_elem((5, 4), true)).is_err());
    }
}
