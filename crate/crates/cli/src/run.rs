//! Dispatch from a [`RunConfig`] to the library, then emission.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use bjmetro::meanfield::{self, DEFAULT_SECTION_PERIODS};
use bjmetro::metrology::{self, AngularGrid};
use bjmetro::propagation::{
    evolve_with, final_state, floquet_hamiltonian, EvolutionOptions, PropagatorCache, Schedule as EvolveSchedule,
};
use bjmetro::scans::{
    atom_scaling, binarize_at_median, chaos_fraction, classical_occupancy_map, entropy_line_cut, jaccard,
    parameter_sweep, phase_map, rank_correlation, select_representative_seeds, time_scaling, ChaosClassifier, FitResult,
    Metric, Output, PhaseQuantity, PointRecord, ScalingSeries, ScalingVariable, Seed, SweepOptions, SweepVariable,
};
use bjmetro::spin::build_spin_system;
use log::{info, warn};
use serde_json::{json, Map, Value};

use crate::config::{scale_warnings, validate, Command, Record, ReplayArgs, RunConfig};
use crate::output::{prepare_output_dir, write_manifest, write_tables, Cell, Manifest, OutputEntry, Status, Table};
use crate::CliError;

/// What a finished run produced.
#[derive(Clone, Debug)]
pub struct Report {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub outputs: Vec<OutputEntry>,
    pub warnings: Vec<String>,
    pub summary: Map<String, Value>,
    /// Outputs whose checksums matched the replayed manifest.
    pub replay_matched: Option<usize>,
}

impl Report {
    pub fn print(&self) {
        for o in &self.outputs {
            println!("{} ({} rows)", self.dir.join(&o.file).display(), o.rows);
        }
        println!("{}", self.manifest.display());
        if let Some(n) = self.replay_matched {
            println!("replay: {n} of {n} outputs checksum-identical");
        }
        if !self.warnings.is_empty() {
            println!("{} warning(s); see the manifest", self.warnings.len());
        }
    }
}

/// Tables and headline numbers of one command.
#[derive(Default)]
struct Outcome {
    tables: Vec<Table>,
    summary: Map<String, Value>,
    warnings: Vec<String>,
}

impl Outcome {
    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_owned(), value.into());
    }
}

fn evolution_options(cfg: &RunConfig) -> EvolutionOptions {
    EvolutionOptions { steps: cfg.numerics.steps, method: cfg.numerics.method, strategy: cfg.numerics.strategy }
}

fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    let n = &cfg.numerics;
    SweepOptions {
        evolution: evolution_options(cfg),
        epsilon: n.epsilon,
        epsilon_budget: n.epsilon_budget,
        richardson: n.richardson,
        richardson_tolerance: n.richardson_tolerance,
        probability_floor: n.probability_floor,
    }
}

fn classifier(cfg: &RunConfig) -> ChaosClassifier {
    let n = &cfg.numerics;
    ChaosClassifier { phi_boxes: n.chaos_boxes, z_boxes: n.chaos_boxes, threshold: n.chaos_threshold }
}

fn seed_json(s: Seed) -> Value {
    json!({ "theta": s.theta, "phi": s.phi })
}

fn fit_json(fit: &FitResult) -> Value {
    json!({ "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared })
}

/// Runs `cfg`, writing its CSVs and then its manifest into `cfg.io.out`.
pub fn execute(cfg: &RunConfig) -> Result<Report, CliError> {
    validate(cfg)?;
    let dir = cfg.io.out.clone();
    prepare_output_dir(&dir, cfg.io.overwrite)?;
    let mut warnings = scale_warnings(cfg);
    for w in &warnings {
        warn!("{w}");
    }
    let started = Instant::now();
    let cache = PropagatorCache::new();
    let compute = || dispatch(cfg, &cache);
    let result = if cfg.io.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.io.workers)
            .build()
            .map_err(|e| CliError::Usage(format!("workers: {e}")))?;
        pool.install(compute)
    } else {
        compute()
    };
    let mut manifest = Manifest {
        tool: "bjmetro".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        status: Status::Ok,
        config: cfg.clone(),
        wall_clock_seconds: 0.0,
        outputs: Vec::new(),
        warnings: Vec::new(),
        summary: Map::new(),
        error: None,
    };
    let outcome = result.and_then(|outcome| {
        let entries = write_tables(&dir, &outcome.tables)?;
        Ok((outcome, entries))
    });
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    match outcome {
        Ok((outcome, entries)) => {
            warnings.extend(outcome.warnings);
            manifest.outputs = entries;
            manifest.warnings = warnings;
            manifest.summary = outcome.summary;
            let path = write_manifest(&dir, &manifest)?;
            info!("{} finished in {:.1} s", cfg.command.name(), manifest.wall_clock_seconds);
            Ok(Report {
                dir,
                manifest: path,
                outputs: manifest.outputs,
                warnings: manifest.warnings,
                summary: manifest.summary,
                replay_matched: None,
            })
        }
        Err(e) => {
            manifest.status = Status::Failed;
            manifest.warnings = warnings;
            manifest.error = Some(e.to_string());
            write_manifest(&dir, &manifest)?;
            Err(e)
        }
    }
}

/// Re-runs the configuration recorded in a manifest and checks every output
/// is byte-identical.
pub fn replay(args: &ReplayArgs) -> Result<Report, CliError> {
    let original = crate::output::Manifest::read(&args.manifest)?;
    if original.status != Status::Ok {
        return Err(CliError::Usage(format!("{} records a failed run", args.manifest.display())));
    }
    let mut cfg = original.config.clone();
    let beside = args.manifest.parent().map(|p| p.join("replay")).unwrap_or_else(|| PathBuf::from("replay"));
    cfg.io.out = args.out.clone().unwrap_or(beside);
    cfg.io.overwrite = args.overwrite.unwrap_or(false);
    if let Some(w) = args.workers {
        cfg.io.workers = w;
    }
    let mut report = execute(&cfg)?;
    let mut mismatched = Vec::new();
    for old in &original.outputs {
        match report.outputs.iter().find(|o| o.file == old.file) {
            Some(new) if new.sha256 == old.sha256 => {}
            Some(_) => mismatched.push(format!("{} differs", old.file)),
            None => mismatched.push(format!("{} missing", old.file)),
        }
    }
    if report.outputs.len() != original.outputs.len() {
        mismatched.push(format!("{} outputs instead of {}", report.outputs.len(), original.outputs.len()));
    }
    if !mismatched.is_empty() {
        return Err(CliError::Mismatch(mismatched.join(", ")));
    }
    report.replay_matched = Some(original.outputs.len());
    Ok(report)
}

fn dispatch(cfg: &RunConfig, cache: &PropagatorCache) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Poincare => poincare(cfg),
        Command::PhaseMap => phase_maps(cfg, cache),
        Command::Evolve => evolve(cfg, cache),
        Command::QfiScaling => qfi_scaling(cfg, cache),
        Command::FiSweep => sweep(cfg, cache, SweepVariable::Chi, &[Output::Qfi, Output::FiX, Output::FiY, Output::FiZ]),
        Command::BzSweep => sweep(cfg, cache, SweepVariable::Bz, &[Output::Qfi, Output::FiX, Output::FiY, Output::FiZ]),
        Command::ErrorPropagation => sweep(cfg, cache, SweepVariable::Bz, &[Output::SzMoments, Output::DeltaBz]),
        Command::EntropyCut => entropy_cut(cfg, cache),
        Command::Husimi => husimi(cfg, cache),
        Command::FloquetH => floquet(cfg, cache),
    }
}

fn poincare(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = &cfg.scan;
    let seeds = meanfield::seed_grid(s.seeds_phi, s.seeds_z, s.z_max)?;
    let section = meanfield::poincare_section(&seeds, &cfg.model, cfg.schedule.periods as usize, cfg.numerics.rk4_steps)?;
    let classifier = classifier(cfg);
    let mut points = Table::new("poincare.csv", &["seed_index", "period", "phi", "z"]);
    let mut trajs =
        Table::new("trajectories.csv", &["seed_index", "phi0", "z0", "boxes", "chaotic", "clamp_events", "aborted"]);
    for (i, t) in section.trajectories.iter().enumerate() {
        for (k, &(phi, z)) in t.points.iter().enumerate() {
            points.push(vec![i.into(), (k + 1).into(), phi.into(), z.into()]);
        }
        let boxes = classifier.box_count(&t.points);
        trajs.push(vec![
            i.into(),
            t.initial.phi.into(),
            t.initial.z.into(),
            boxes.into(),
            (t.aborted.is_none() && boxes > classifier.threshold).into(),
            t.clamp_events.into(),
            t.aborted.clone().map_or(Cell::Empty, Cell::Text),
        ]);
    }
    let mut out = Outcome::default();
    out.note("chaos_fraction", chaos_fraction(&section, &classifier));
    out.note("clamp_events", section.clamp_events());
    out.note("aborted_trajectories", section.aborted());
    if section.clamp_events() > 0 {
        out.warnings.push(format!("{} RK4 steps clamped |z| to 1", section.clamp_events()));
    }
    if section.aborted() > 0 {
        out.warnings.push(format!("{} trajectories aborted", section.aborted()));
    }
    out.tables = vec![points, trajs];
    Ok(out)
}

fn phase_maps(cfg: &RunConfig, cache: &PropagatorCache) -> Result<Outcome, CliError> {
    let s = &cfg.scan;
    let grid = AngularGrid::uniform(s.n_theta, s.n_phi)?;
    let opts = sweep_options(cfg);
    let mut out = Outcome::default();
    let mut maps = Vec::new();
    for &q in &s.quantities {
        let map = phase_map(q, &grid, &cfg.model, cfg.schedule.periods, &opts, cache)?;
        if !map.missing.is_empty() {
            out.warnings.push(format!("{}: {} grid points failed", q.name(), map.missing.len()));
        }
        if let Some(eps) = map.epsilon {
            out.note("epsilon", eps);
        }
        maps.push(map);
    }
    let occupancy = if s.occupancy {
        let occ = classical_occupancy_map(
            &grid,
            &cfg.model,
            DEFAULT_SECTION_PERIODS,
            cfg.numerics.rk4_steps,
            &classifier(cfg),
        )?;
        out.note("occupancy_periods", DEFAULT_SECTION_PERIODS);
        Some(occ)
    } else {
        None
    };
    let find = |q: PhaseQuantity| maps.iter().find(|m| m.quantity == q);
    let flat = |q: PhaseQuantity| find(q).map(|m| m.values.iter().copied().collect::<Vec<f64>>());
    if let (Some(e), Some(f)) = (flat(PhaseQuantity::Entropy), flat(PhaseQuantity::Fidelity)) {
        out.note("entropy_fidelity_rank_correlation", rank_correlation(&e, &f)?);
    }
    if let (Some(e), Some(occ)) = (flat(PhaseQuantity::Entropy), &occupancy) {
        let counts: Vec<f64> = occ.counts.iter().copied().collect();
        let chaotic: Vec<bool> = occ.chaotic.iter().copied().collect();
        let high = binarize_at_median(&e);
        out.note("entropy_occupancy_jaccard", jaccard(&high, &binarize_at_median(&counts))?);
        out.note("entropy_chaotic_jaccard", jaccard(&high, &chaotic)?);
        out.note("chaotic_fraction", chaotic.iter().filter(|&&c| c).count() as f64 / chaotic.len() as f64);
    }
    if let (Some(q), Some(occ)) = (find(PhaseQuantity::Qfi), &occupancy) {
        match select_representative_seeds(q, &occ.chaotic) {
            Ok(r) => {
                let mut seeds = Table::new("seeds.csv", &["regime", "theta", "phi"]);
                for (label, seed) in [("chaotic_sea", r.chaotic_sea), ("edge", r.edge), ("regular_island", r.regular_island)] {
                    seeds.push(vec![label.into(), seed.theta.into(), seed.phi.into()]);
                    out.note(label, seed_json(seed));
                }
                out.tables.push(seeds);
            }
            Err(e) => out.warnings.push(format!("no representative seeds: {e}")),
        }
    }
    let mut header = vec!["theta_index", "phi_index", "theta", "phi"];
    header.extend(maps.iter().map(|m| m.quantity.name()));
    if occupancy.is_some() {
        header.extend(["occupancy", "chaotic"]);
    }
    let mut table = Table::new("phase_map.csv", &header);
    for (i, &theta) in grid.thetas.iter().enumerate() {
        for (j, &phi) in grid.phis.iter().enumerate() {
            let mut row: Vec<Cell> = vec![i.into(), j.into(), theta.into(), phi.into()];
            for m in &maps {
                let v = m.values[[i, j]];
                row.push(if v.is_finite() { v.into() } else { Cell::Empty });
            }
            if let Some(occ) = &occupancy {
                row.push(occ.counts[[i, j]].into());
                row.push(occ.chaotic[[i, j]].into());
            }
            table.push(row);
        }
    }
    out.tables.insert(0, table);
    Ok(out)
}

fn evolve(cfg: &RunConfig, cache: &PropagatorCache) -> Result<Outcome, CliError> {
    let n = cfg.schedule.periods;
    let schedule = if !cfg.schedule.at.is_empty() {
        EvolveSchedule::At(cfg.schedule.at.clone())
    } else {
        match cfg.schedule.record {
            Record::Every => EvolveSchedule::Every,
            Record::PowersOfTwo => EvolveSchedule::powers_of_two(n),
            Record::Final => EvolveSchedule::Final,
        }
    };
    let psi0 = cfg.seed.state(cfg.model.n_atoms)?;
    let traj = evolve_with(&cfg.model, &psi0, n, &schedule, &evolution_options(cfg), cache)?;
    let (_, ops) = build_spin_system(cfg.model.n_atoms)?;
    let period = cfg.model.period();
    let mut table = Table::new(
        "evolve.csv",
        &["period", "time", "sx", "sy", "sz", "sz2", "linear_entropy", "fidelity", "mean_theta", "mean_phi"],
    );
    let rows = std::iter::once((0u64, &psi0)).chain(traj.periods.iter().copied().zip(traj.states.iter()));
    for (p, psi) in rows {
        let (theta, phi) = metrology::mean_spin_angles(psi, &ops)?;
        table.push(vec![
            p.into(),
            (p as f64 * period).into(),
            bjmetro::spin::expectation(psi, &ops.sx)?.into(),
            bjmetro::spin::expectation(psi, &ops.sy)?.into(),
            bjmetro::spin::expectation(psi, &ops.sz)?.into(),
            bjmetro::spin::expectation(psi, &ops.sz2)?.into(),
            metrology::linear_entropy(psi, &ops)?.into(),
            metrology::fidelity(&psi0, psi)?.into(),
            theta.into(),
            phi.into(),
        ]);
    }
    let mut out = Outcome::default();
    out.note("renormalizations", traj.renormalizations);
    out.note("max_norm_drift", traj.max_drift);
    if traj.renormalizations > 0 {
        out.warnings.push(format!("state renormalized {} times", traj.renormalizations));
    }
    out.tables.push(table);
    Ok(out)
}

fn record_warnings(out: &mut Outcome, records: &[PointRecord]) {
    for r in records {
        out.warnings.extend(r.warnings.iter().cloned());
    }
}

fn scaling_rows(table: &mut Table, label: &[Cell], series: &ScalingSeries) {
    for (i, r) in series.records.iter().enumerate() {
        let mut row = label.to_vec();
        row.extend([
            series.xs[i].into(),
            series.ys[i].into(),
            r.params.n_atoms.into(),
            r.n_periods.into(),
            r.epsilon.into(),
            r.richardson_ok.into(),
            r.fi_flagged.into(),
        ]);
        table.push(row);
    }
}

const SCALING_COLUMNS: [&str; 7] = ["x", "y", "n_atoms", "n_periods", "epsilon", "richardson_ok", "fi_flagged"];
const FIT_COLUMNS: [&str; 6] = ["slope", "intercept", "r_squared", "x_min", "x_max", "points"];

fn fit_row(label: &[Cell], series: &ScalingSeries, fit: &FitResult) -> Vec<Cell> {
    let (lo, hi) = fit.fit_range;
    let mut row = label.to_vec();
    row.extend([
        fit.slope.into(),
        fit.intercept.into(),
        fit.r_squared.into(),
        series.xs[lo].into(),
        series.xs[hi].into(),
        (hi - lo + 1).into(),
    ]);
    row
}

fn qfi_scaling(cfg: &RunConfig, cache: &PropagatorCache) -> Result<Outcome, CliError> {
    let s = &cfg.scan;
    let opts = sweep_options(cfg);
    let (series, x_min) = match s.variable {
        ScalingVariable::Atoms => {
            (atom_scaling(&cfg.model, cfg.seed, cfg.schedule.periods, &s.atoms, s.metric, &opts, cache)?, 0.0)
        }
        ScalingVariable::Time => {
            let times = if cfg.schedule.at.is_empty() {
                match EvolveSchedule::powers_of_two(cfg.schedule.periods) {
                    EvolveSchedule::At(v) => v,
                    _ => unreachable!("powers_of_two is explicit"),
                }
            } else {
                cfg.schedule.at.clone()
            };
            let series = time_scaling(&cfg.model, cfg.seed, &times, s.metric, &opts, cache)?;
            (series, s.fit_start as f64 * cfg.model.period())
        }
    };
    let mut out = Outcome::default();
    record_warnings(&mut out, &series.records);
    for (x, e) in &series.failures {
        out.warnings.push(format!("x = {x}: {e}"));
    }
    if series.xs.len() < 2 {
        let first = series.failures.first().map_or_else(String::new, |(x, e)| format!("; at x = {x}: {e}"));
        return Err(bjmetro::Error::Numerical(format!(
            "{} of {} scaling points failed{first}",
            series.failures.len(),
            series.failures.len() + series.xs.len()
        ))
        .into());
    }
    let fit = series.fit_from(x_min)?;
    let variable = match s.variable {
        ScalingVariable::Atoms => "atoms",
        ScalingVariable::Time => "time",
    };
    let label = [Cell::from(s.metric.name()), Cell::from(variable)];
    let mut header = vec!["metric", "variable"];
    header.extend(SCALING_COLUMNS);
    let mut scaling = Table::new("scaling.csv", &header);
    scaling_rows(&mut scaling, &label, &series);
    let mut header = vec!["metric", "variable"];
    header.extend(FIT_COLUMNS);
    let mut fits = Table::new("fit.csv", &header);
    fits.push(fit_row(&label, &series, &fit));
    out.note("fit", fit_json(&fit));
    out.tables = vec![scaling, fits];
    Ok(out)
}

fn sweep(
    cfg: &RunConfig,
    cache: &PropagatorCache,
    variable: SweepVariable,
    outputs: &[Output],
) -> Result<Outcome, CliError> {
    let s = &cfg.scan;
    let opts = sweep_options(cfg);
    let table = parameter_sweep(variable, &s.values, &cfg.model, cfg.seed, cfg.schedule.periods, outputs, &opts, cache)?;
    let readout = outputs.contains(&Output::DeltaBz);
    let metrics: Vec<Metric> = if readout {
        vec![Metric::DeltaBz]
    } else {
        vec![Metric::Qfi, Metric::FiX, Metric::FiY, Metric::FiZ]
    };
    let mut out = Outcome::default();
    let var = variable.name();
    let mut header = vec![var];
    if readout {
        header.extend(["delta_bz", "delta_bz_squared", "sz_mean", "sz2_mean"]);
    } else {
        header.extend(["qfi", "fi_x", "fi_y", "fi_z", "richardson_ok", "fi_flagged"]);
    }
    header.extend(["epsilon", "error"]);
    let mut rows = Table::new("sweep.csv", &header);
    let mut worst_ratio: Option<f64> = None;
    for (value, row) in table.values.iter().zip(&table.rows) {
        let mut cells: Vec<Cell> = vec![(*value).into()];
        match row {
            Ok(r) => {
                if readout {
                    cells.extend([
                        r.delta_bz.into(),
                        Metric::DeltaBzSquared.extract(r).into(),
                        r.sz_mean.into(),
                        r.sz2_mean.into(),
                    ]);
                } else {
                    cells.extend([r.qfi.into(), r.fi[0].into(), r.fi[1].into(), r.fi[2].into()]);
                    cells.extend([r.richardson_ok.into(), r.fi_flagged.into()]);
                    if let Some(q) = r.qfi.filter(|&q| q > 0.0) {
                        for f in r.fi.iter().flatten() {
                            worst_ratio = Some(worst_ratio.map_or(f / q, |w: f64| w.max(f / q)));
                        }
                    }
                }
                cells.extend([r.epsilon.into(), Cell::Empty]);
                out.warnings.extend(r.warnings.iter().cloned());
            }
            Err(e) => {
                cells.extend(std::iter::repeat_n(Cell::Empty, header.len() - 3));
                cells.extend([Cell::Empty, e.clone().into()]);
                out.warnings.push(format!("{var} = {value}: {e}"));
            }
        }
        rows.push(cells);
    }
    if let Some(w) = worst_ratio {
        out.note("max_fi_over_qfi", w);
    }
    let mut optima = Table::new("optimum.csv", &["metric", "index", var, "value"]);
    let mut best = Vec::new();
    for &m in &metrics {
        if let Some((i, v)) = table.optimum(m) {
            optima.push(vec![m.name().into(), i.into(), table.values[i].into(), v.into()]);
            out.note(&format!("optimum_{}", m.name()), json!({ var: table.values[i], "value": v }));
            best.push((m, table.values[i]));
        } else {
            out.warnings.push(format!("no finite {} in the sweep", m.name()));
        }
    }
    out.tables = vec![rows, optima];
    if s.atoms.is_empty() {
        return Ok(out);
    }
    // Scaling with N at each optimum; the readout fits (Delta B_z)^2.
    let mut header = vec!["metric", var];
    header.extend(SCALING_COLUMNS);
    let mut scaling = Table::new("scaling.csv", &header);
    let mut header = vec!["metric", var];
    header.extend(FIT_COLUMNS);
    let mut fits = Table::new("fit.csv", &header);
    for (m, value) in best {
        let metric = if m == Metric::DeltaBz { Metric::DeltaBzSquared } else { m };
        let params = variable.apply(&cfg.model, value);
        let series = atom_scaling(&params, cfg.seed, cfg.schedule.periods, &s.atoms, metric, &opts, cache)?;
        record_warnings(&mut out, &series.records);
        for (x, e) in &series.failures {
            out.warnings.push(format!("{} at N = {x}: {e}", metric.name()));
        }
        let label = [Cell::from(metric.name()), Cell::from(value)];
        scaling_rows(&mut scaling, &label, &series);
        match series.fit_from(0.0) {
            Ok(fit) => {
                fits.push(fit_row(&label, &series, &fit));
                out.note(&format!("fit_{}", metric.name()), fit_json(&fit));
            }
            Err(e) => out.warnings.push(format!("{} fit: {e}", metric.name())),
        }
    }
    out.tables.extend([scaling, fits]);
    Ok(out)
}

fn entropy_cut(cfg: &RunConfig, cache: &PropagatorCache) -> Result<Outcome, CliError> {
    let s = &cfg.scan;
    let thetas: Vec<f64> = (0..s.n_theta).map(|k| PI * k as f64 / (s.n_theta - 1) as f64).collect();
    let curves = entropy_line_cut(
        s.line_phi,
        &thetas,
        &cfg.model,
        cfg.schedule.periods,
        &s.atoms,
        &evolution_options(cfg),
        cache,
    )?;
    let mut cut = Table::new("entropy_cut.csv", &["n_atoms", "theta", "linear_entropy"]);
    let mut sharp = Table::new("sharpness.csv", &["n_atoms", "max_slope", "theta_min"]);
    for c in &curves {
        for (&t, &e) in c.thetas.iter().zip(&c.entropy) {
            cut.push(vec![c.n_atoms.into(), t.into(), e.into()]);
        }
        sharp.push(vec![c.n_atoms.into(), c.max_slope().into(), c.argmin().into()]);
    }
    let slopes: Vec<f64> = curves.iter().map(|c| c.max_slope()).collect();
    let mut out = Outcome::default();
    out.note("max_slopes", slopes.clone());
    out.note("sharpening_with_n", slopes.windows(2).all(|w| w[1] > w[0]));
    out.tables = vec![cut, sharp];
    Ok(out)
}

fn husimi(cfg: &RunConfig, cache: &PropagatorCache) -> Result<Outcome, CliError> {
    let psi0 = cfg.seed.state(cfg.model.n_atoms)?;
    let (psi, drift) = final_state(&cfg.model, &psi0, cfg.schedule.periods, &evolution_options(cfg), cache)?;
    let grid = AngularGrid::uniform(cfg.scan.n_theta, cfg.scan.n_phi)?;
    let q = metrology::husimi_q(&psi, &grid)?;
    let mut table = Table::new("husimi.csv", &["theta", "phi", "q"]);
    for (i, &theta) in q.thetas.iter().enumerate() {
        for (j, &phi) in q.phis.iter().enumerate() {
            table.push(vec![theta.into(), phi.into(), q.values[[i, j]].into()]);
        }
    }
    let mut out = Outcome::default();
    out.note("normalization", q.normalization());
    out.note("max_norm_drift", drift);
    out.tables.push(table);
    Ok(out)
}

fn floquet(cfg: &RunConfig, cache: &PropagatorCache) -> Result<Outcome, CliError> {
    let u = cache.get_or_build(&cfg.model, cfg.numerics.steps, cfg.numerics.method)?;
    let hf = floquet_hamiltonian(&u)?;
    let mut energies = Table::new("quasienergies.csv", &["index", "quasienergy"]);
    for (k, &e) in hf.quasienergies.iter().enumerate() {
        energies.push(vec![k.into(), e.into()]);
    }
    let mut matrix = Table::new("floquet_h.csv", &["row", "col", "re", "im"]);
    for ((r, c), v) in hf.h.indexed_iter() {
        matrix.push(vec![r.into(), c.into(), v.re.into(), v.im.into()]);
    }
    let mut out = Outcome::default();
    out.note("unitarity_defect", u.unitarity_defect());
    out.note("branch_cut_hits", hf.branch_cut_hits);
    if hf.branch_cut_hits > 0 {
        out.warnings.push(format!("{} eigenvalues sat on the branch cut", hf.branch_cut_hits));
    }
    out.tables = vec![energies, matrix];
    Ok(out)
}
