//! Command line, config file and environment, merged into one [`RunConfig`].
//!
//! Precedence, lowest first: built-in defaults, `BJMETRO_OUT`, the config
//! file, flags. The config file is flat TOML whose keys are the long flag
//! names with `_` for `-`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use bjmetro::propagation::{Method, ModelParams, Strategy, DEFAULT_EPSILON, DEFAULT_RICHARDSON_TOLERANCE, DEFAULT_STEPS};
use bjmetro::scans::{Metric, PhaseQuantity, ScalingVariable, Seed, DEFAULT_EPSILON_BUDGET, DEFAULT_TIME_FIT_START};
use bjmetro::spin::DEFAULT_MAX_ATOMS;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "BJMETRO_OUT";
pub const DEFAULT_OUT: &str = "bjmetro-out";

// Beyond these a run takes hours on a workstation and gets a runtime warning.
pub const DESK_MAX_ATOMS: usize = 400;
pub const DESK_MAX_GRID: usize = 41 * 41;
pub const DESK_MAX_MAP_PERIODS: u64 = 1 << 12;

#[derive(Parser, Debug)]
#[command(name = "bjmetro", version, about = "Driven collective-spin dynamics and parameter-estimation scans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Subcommand, Debug)]
pub enum CommandArgs {
    /// Stroboscopic mean-field section from a grid of classical seeds.
    Poincare(PoincareArgs),
    /// Entropy, fidelity or QFI over initial coherent states.
    PhaseMap(PhaseMapArgs),
    /// Observables along the stroboscopic evolution of one coherent state.
    Evolve(EvolveArgs),
    /// Log-log scaling of a figure of merit with time or particle number.
    QfiScaling(ScalingArgs),
    /// QFI and per-axis Fisher information against chi.
    FiSweep(SweepArgs),
    /// QFI and per-axis Fisher information against B_z.
    BzSweep(SweepArgs),
    /// S_z readout uncertainty of B_z against B_z.
    ErrorPropagation(SweepArgs),
    /// Linear entropy along a line of constant phi for several N.
    EntropyCut(EntropyCutArgs),
    /// Husimi Q function of the evolved state.
    Husimi(HusimiArgs),
    /// Effective Floquet Hamiltonian and quasienergies.
    FloquetH(FloquetArgs),
    /// Re-run the configuration recorded in a manifest and compare checksums.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Particle number N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Nonlinearity chi (the Hamiltonian has chi / N * S_z^2).
    #[arg(long, allow_negative_numbers = true)]
    pub chi: Option<f64>,
    /// Static field B_z, the estimated parameter.
    #[arg(long, allow_negative_numbers = true)]
    pub bz: Option<f64>,
    /// Drive amplitude B_x.
    #[arg(long, allow_negative_numbers = true)]
    pub bx: Option<f64>,
    /// Drive frequency; the period is 2 pi / omega.
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct SeedArgs {
    /// Polar angle of the initial coherent state (radians).
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Azimuth of the initial coherent state (radians).
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct EvolutionArgs {
    /// Time steps per drive period.
    #[arg(long)]
    pub steps: Option<usize>,
    /// split-step, strang or exact-step.
    #[arg(long)]
    pub method: Option<Method>,
    /// auto, direct or propagator.
    #[arg(long)]
    pub strategy: Option<Strategy>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct DerivativeArgs {
    /// Largest finite-difference step in B_z.
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Bound on epsilon * t * J; shortens epsilon at long times.
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon_budget: Option<f64>,
    /// Repeat the QFI with epsilon / 2 and warn on disagreement.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub richardson: Option<bool>,
    /// Relative QFI disagreement tolerated by the Richardson check.
    #[arg(long, allow_negative_numbers = true)]
    pub richardson_tolerance: Option<f64>,
    /// Outcome probabilities below this are left out of the Fisher information.
    #[arg(long, allow_negative_numbers = true)]
    pub probability_floor: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct ClassicalArgs {
    /// RK4 steps per drive period.
    #[arg(long)]
    pub rk4_steps: Option<usize>,
    /// Boxes per axis of the chaos classifier.
    #[arg(long)]
    pub chaos_boxes: Option<usize>,
    /// Trajectories visiting more boxes than this are chaotic.
    #[arg(long)]
    pub chaos_threshold: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct GridArgs {
    /// Polar grid points over [0, pi].
    #[arg(long)]
    pub n_theta: Option<usize>,
    /// Azimuthal grid points over [0, 2 pi).
    #[arg(long)]
    pub n_phi: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct IoArgs {
    /// Output directory (default: $BJMETRO_OUT, else `bjmetro-out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace the outputs of a previous run in the same directory.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub overwrite: Option<bool>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct Common {
    /// Flat TOML file with default values for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub io: IoArgs,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct PeriodsArgs {
    /// Number of drive periods.
    #[arg(long, allow_negative_numbers = true)]
    pub periods: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct PoincareOnly {
    /// Classical seeds along phi.
    #[arg(long)]
    pub seeds_phi: Option<usize>,
    /// Classical seeds along z.
    #[arg(long)]
    pub seeds_z: Option<usize>,
    /// Seeds cover z in [-z_max, z_max].
    #[arg(long, allow_negative_numbers = true)]
    pub z_max: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PoincareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub periods: PeriodsArgs,
    #[command(flatten)]
    pub classical: ClassicalArgs,
    #[command(flatten)]
    pub only: PoincareOnly,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct PhaseMapOnly {
    /// Comma-separated subset of entropy, fidelity, qfi.
    #[arg(long, value_delimiter = ',')]
    pub quantities: Option<Vec<PhaseQuantity>>,
    /// Also compute the classical box-count map and the representative seeds.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub occupancy: Option<bool>,
}

#[derive(Args, Debug)]
pub struct PhaseMapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub periods: PeriodsArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[command(flatten)]
    pub derivative: DerivativeArgs,
    #[command(flatten)]
    pub classical: ClassicalArgs,
    #[command(flatten)]
    pub only: PhaseMapOnly,
    #[command(flatten)]
    pub common: Common,
}

/// Which periods `evolve` reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Record {
    Every,
    PowersOfTwo,
    Final,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct EvolveOnly {
    /// Reported periods when `--at` is not given.
    #[arg(long)]
    pub record: Option<Record>,
    /// Explicit comma-separated period counts to report.
    #[arg(long, value_delimiter = ',')]
    pub at: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub periods: PeriodsArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[command(flatten)]
    pub only: EvolveOnly,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct ScalingOnly {
    /// atoms or time.
    #[arg(long)]
    pub variable: Option<ScalingVariable>,
    /// qfi, fi_x, fi_y, fi_z, delta_bz or delta_bz_squared.
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Particle numbers, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub atoms: Option<Vec<usize>>,
    /// Period counts for a time scan (default: powers of two up to --periods).
    #[arg(long, value_delimiter = ',')]
    pub at: Option<Vec<u64>>,
    /// Time fits use samples from this many periods on.
    #[arg(long)]
    pub fit_start: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ScalingArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub periods: PeriodsArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[command(flatten)]
    pub derivative: DerivativeArgs,
    #[command(flatten)]
    pub only: ScalingOnly,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct SweepOnly {
    /// Explicit comma-separated sweep values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub values: Option<Vec<f64>>,
    /// Evenly spaced sweep from --from to --to with --count points.
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Particle numbers for a scaling fit at each optimum.
    #[arg(long, value_delimiter = ',')]
    pub atoms: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub periods: PeriodsArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[command(flatten)]
    pub derivative: DerivativeArgs,
    #[command(flatten)]
    pub only: SweepOnly,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct EntropyCutOnly {
    /// Azimuth of the cut (radians).
    #[arg(long, allow_negative_numbers = true)]
    pub line_phi: Option<f64>,
    /// Points along theta in [0, pi].
    #[arg(long)]
    pub n_theta: Option<usize>,
    /// Particle numbers, one curve each.
    #[arg(long, value_delimiter = ',')]
    pub atoms: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct EntropyCutArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub periods: PeriodsArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[command(flatten)]
    pub only: EntropyCutOnly,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct HusimiArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub periods: PeriodsArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct FloquetArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Directory for the replayed outputs (default: `replay` beside the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an earlier run in the output directory.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub overwrite: Option<bool>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Poincare,
    PhaseMap,
    Evolve,
    QfiScaling,
    FiSweep,
    BzSweep,
    ErrorPropagation,
    EntropyCut,
    Husimi,
    FloquetH,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Poincare => "poincare",
            Command::PhaseMap => "phase-map",
            Command::Evolve => "evolve",
            Command::QfiScaling => "qfi-scaling",
            Command::FiSweep => "fi-sweep",
            Command::BzSweep => "bz-sweep",
            Command::ErrorPropagation => "error-propagation",
            Command::EntropyCut => "entropy-cut",
            Command::Husimi => "husimi",
            Command::FloquetH => "floquet-h",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub steps: usize,
    pub method: Method,
    pub strategy: Strategy,
    pub epsilon: f64,
    pub epsilon_budget: f64,
    pub richardson: bool,
    pub richardson_tolerance: f64,
    pub probability_floor: f64,
    pub rk4_steps: usize,
    pub chaos_boxes: usize,
    pub chaos_threshold: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub periods: u64,
    /// Explicit period counts; empty means the command's default.
    pub at: Vec<u64>,
    pub record: Record,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan {
    pub variable: ScalingVariable,
    pub metric: Metric,
    pub atoms: Vec<usize>,
    pub values: Vec<f64>,
    pub fit_start: u64,
    pub quantities: Vec<PhaseQuantity>,
    pub occupancy: bool,
    pub n_theta: usize,
    pub n_phi: usize,
    pub seeds_phi: usize,
    pub seeds_z: usize,
    pub z_max: f64,
    pub line_phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Io {
    pub out: PathBuf,
    pub overwrite: bool,
    /// 0 means one worker per core.
    pub workers: usize,
}

/// Fully resolved run description; echoed verbatim into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelParams,
    pub seed: Seed,
    pub numerics: Numerics,
    pub schedule: Schedule,
    pub scan: Scan,
    pub io: Io,
}

/// What the command line asked for.
#[derive(Debug)]
pub enum Invocation {
    Run(Box<RunConfig>),
    Replay(ReplayArgs),
}

/// Keys accepted in a config file: every long flag of every run command.
fn known_keys() -> BTreeSet<String> {
    let cmd = Cli::command();
    cmd.get_subcommands()
        .filter(|s| s.get_name() != "replay")
        .flat_map(|s| s.get_arguments().map(|a| a.get_id().as_str().to_owned()).collect::<Vec<_>>())
        .filter(|id| id != "config" && id != "help" && id != "version")
        .collect()
}

fn read_config_file(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
    let known = known_keys();
    if let Some(bad) = table.keys().find(|k| !known.contains(k.as_str())) {
        return Err(CliError::Usage(format!("config file {}: unknown key `{bad}`", path.display())));
    }
    Ok(table)
}

/// Flag values laid over the config file, for one group of settings.
fn layered<T: Serialize + DeserializeOwned>(flags: &T, file: &toml::Table) -> Result<T, CliError> {
    let mut merged = file.clone();
    let from_flags = toml::Table::try_from(flags).map_err(|e| CliError::Usage(e.to_string()))?;
    merged.extend(from_flags);
    merged.try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))
}

fn defaults(command: Command) -> RunConfig {
    let periods = match command {
        Command::Poincare => 500,
        Command::PhaseMap | Command::QfiScaling | Command::EntropyCut => 4096,
        Command::Evolve => 1024,
        Command::FiSweep | Command::BzSweep | Command::ErrorPropagation => 3,
        Command::Husimi => 64,
        Command::FloquetH => 1,
    };
    let (n_theta, n_phi) = match command {
        Command::Husimi => bjmetro::metrology::HUSIMI_GRID,
        Command::EntropyCut => (91, 1),
        _ => (41, 41),
    };
    let values: Vec<f64> = match command {
        Command::FiSweep => (0..=30).map(f64::from).collect(),
        Command::BzSweep | Command::ErrorPropagation => (0..=40).map(|k| f64::from(k) * 0.1).collect(),
        _ => Vec::new(),
    };
    let atoms = match command {
        Command::QfiScaling => vec![50, 100, 200, 400],
        Command::EntropyCut => vec![100, 200, 400],
        _ => Vec::new(),
    };
    let metric = match command {
        Command::ErrorPropagation => Metric::DeltaBzSquared,
        _ => Metric::Qfi,
    };
    RunConfig {
        command,
        model: ModelParams::new(100, 10.0, FRAC_PI_2, 1.5),
        seed: Seed::new(FRAC_PI_2, 0.0),
        numerics: Numerics {
            steps: DEFAULT_STEPS,
            method: Method::SplitStep,
            strategy: Strategy::Auto,
            epsilon: DEFAULT_EPSILON,
            epsilon_budget: DEFAULT_EPSILON_BUDGET,
            richardson: true,
            richardson_tolerance: DEFAULT_RICHARDSON_TOLERANCE,
            probability_floor: bjmetro::metrology::DEFAULT_PROBABILITY_FLOOR,
            rk4_steps: bjmetro::meanfield::DEFAULT_STEPS_PER_PERIOD,
            chaos_boxes: 50,
            chaos_threshold: 100,
        },
        schedule: Schedule { periods, at: Vec::new(), record: Record::Every },
        scan: Scan {
            variable: ScalingVariable::Atoms,
            metric,
            atoms,
            values,
            fit_start: DEFAULT_TIME_FIT_START,
            quantities: vec![PhaseQuantity::Entropy, PhaseQuantity::Fidelity, PhaseQuantity::Qfi],
            occupancy: false,
            n_theta,
            n_phi,
            seeds_phi: 24,
            seeds_z: 24,
            z_max: 0.98,
            line_phi: std::f64::consts::PI,
        },
        io: Io { out: PathBuf::from(DEFAULT_OUT), overwrite: false, workers: 0 },
    }
}

/// Overlays that every command may set.
struct Layers<'a> {
    file: &'a toml::Table,
    cfg: RunConfig,
}

impl Layers<'_> {
    fn model(&mut self, flags: &ModelArgs) -> Result<(), CliError> {
        let m: ModelArgs = layered(flags, self.file)?;
        let p = &mut self.cfg.model;
        p.n_atoms = m.n.unwrap_or(p.n_atoms);
        p.chi = m.chi.unwrap_or(p.chi);
        p.bz = m.bz.unwrap_or(p.bz);
        p.bx = m.bx.unwrap_or(p.bx);
        p.omega = m.omega.unwrap_or(p.omega);
        Ok(())
    }

    fn seed(&mut self, flags: &SeedArgs) -> Result<(), CliError> {
        let s: SeedArgs = layered(flags, self.file)?;
        self.cfg.seed.theta = s.theta.unwrap_or(self.cfg.seed.theta);
        self.cfg.seed.phi = s.phi.unwrap_or(self.cfg.seed.phi);
        Ok(())
    }

    fn periods(&mut self, flags: &PeriodsArgs) -> Result<(), CliError> {
        let p: PeriodsArgs = layered(flags, self.file)?;
        self.cfg.schedule.periods = p.periods.unwrap_or(self.cfg.schedule.periods);
        Ok(())
    }

    fn evolution(&mut self, flags: &EvolutionArgs) -> Result<(), CliError> {
        let e: EvolutionArgs = layered(flags, self.file)?;
        let n = &mut self.cfg.numerics;
        n.steps = e.steps.unwrap_or(n.steps);
        n.method = e.method.unwrap_or(n.method);
        n.strategy = e.strategy.unwrap_or(n.strategy);
        Ok(())
    }

    fn derivative(&mut self, flags: &DerivativeArgs) -> Result<(), CliError> {
        let d: DerivativeArgs = layered(flags, self.file)?;
        let n = &mut self.cfg.numerics;
        n.epsilon = d.epsilon.unwrap_or(n.epsilon);
        n.epsilon_budget = d.epsilon_budget.unwrap_or(n.epsilon_budget);
        n.richardson = d.richardson.unwrap_or(n.richardson);
        n.richardson_tolerance = d.richardson_tolerance.unwrap_or(n.richardson_tolerance);
        n.probability_floor = d.probability_floor.unwrap_or(n.probability_floor);
        Ok(())
    }

    fn classical(&mut self, flags: &ClassicalArgs) -> Result<(), CliError> {
        let c: ClassicalArgs = layered(flags, self.file)?;
        let n = &mut self.cfg.numerics;
        n.rk4_steps = c.rk4_steps.unwrap_or(n.rk4_steps);
        n.chaos_boxes = c.chaos_boxes.unwrap_or(n.chaos_boxes);
        n.chaos_threshold = c.chaos_threshold.unwrap_or(n.chaos_threshold);
        Ok(())
    }

    fn grid(&mut self, flags: &GridArgs) -> Result<(), CliError> {
        let g: GridArgs = layered(flags, self.file)?;
        self.cfg.scan.n_theta = g.n_theta.unwrap_or(self.cfg.scan.n_theta);
        self.cfg.scan.n_phi = g.n_phi.unwrap_or(self.cfg.scan.n_phi);
        Ok(())
    }

    fn io(&mut self, flags: &IoArgs, env_out: Option<PathBuf>) -> Result<(), CliError> {
        let io: IoArgs = layered(flags, self.file)?;
        let cfg = &mut self.cfg.io;
        cfg.out = io.out.or(env_out).unwrap_or_else(|| cfg.out.clone());
        cfg.overwrite = io.overwrite.unwrap_or(cfg.overwrite);
        cfg.workers = io.workers.unwrap_or(cfg.workers);
        Ok(())
    }
}

fn sweep_values(only: &SweepOnly, default: Vec<f64>) -> Result<Vec<f64>, CliError> {
    if let Some(v) = &only.values {
        return Ok(v.clone());
    }
    match (only.from, only.to, only.count) {
        (None, None, None) => Ok(default),
        (Some(a), Some(b), Some(n)) => {
            if n == 0 {
                return Err(CliError::Usage("count: must be at least 1".into()));
            }
            if n == 1 {
                return Ok(vec![a]);
            }
            Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
        }
        _ => Err(CliError::Usage("from, to and count must be given together".into())),
    }
}

/// Parses `argv` (program name first) into a run or a replay request.
pub fn parse_config<I, T>(argv: I, env_out: Option<PathBuf>) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(CliError::Clap)?;
    let (command, common) = match &cli.command {
        CommandArgs::Replay(r) => {
            return Ok(Invocation::Replay(ReplayArgs {
                manifest: r.manifest.clone(),
                out: r.out.clone(),
                overwrite: r.overwrite,
                workers: r.workers,
            }))
        }
        CommandArgs::Poincare(a) => (Command::Poincare, &a.common),
        CommandArgs::PhaseMap(a) => (Command::PhaseMap, &a.common),
        CommandArgs::Evolve(a) => (Command::Evolve, &a.common),
        CommandArgs::QfiScaling(a) => (Command::QfiScaling, &a.common),
        CommandArgs::FiSweep(a) => (Command::FiSweep, &a.common),
        CommandArgs::BzSweep(a) => (Command::BzSweep, &a.common),
        CommandArgs::ErrorPropagation(a) => (Command::ErrorPropagation, &a.common),
        CommandArgs::EntropyCut(a) => (Command::EntropyCut, &a.common),
        CommandArgs::Husimi(a) => (Command::Husimi, &a.common),
        CommandArgs::FloquetH(a) => (Command::FloquetH, &a.common),
    };
    let file = match &common.config {
        Some(path) => read_config_file(path)?,
        None => toml::Table::new(),
    };
    let mut l = Layers { file: &file, cfg: defaults(command) };
    l.io(&common.io, env_out)?;
    match &cli.command {
        CommandArgs::Poincare(a) => {
            l.model(&a.model)?;
            l.periods(&a.periods)?;
            l.classical(&a.classical)?;
            let o: PoincareOnly = layered(&a.only, &file)?;
            let s = &mut l.cfg.scan;
            s.seeds_phi = o.seeds_phi.unwrap_or(s.seeds_phi);
            s.seeds_z = o.seeds_z.unwrap_or(s.seeds_z);
            s.z_max = o.z_max.unwrap_or(s.z_max);
        }
        CommandArgs::PhaseMap(a) => {
            l.model(&a.model)?;
            l.periods(&a.periods)?;
            l.grid(&a.grid)?;
            l.evolution(&a.evolution)?;
            l.derivative(&a.derivative)?;
            l.classical(&a.classical)?;
            let o: PhaseMapOnly = layered(&a.only, &file)?;
            let s = &mut l.cfg.scan;
            s.quantities = o.quantities.unwrap_or_else(|| s.quantities.clone());
            s.occupancy = o.occupancy.unwrap_or(s.occupancy);
        }
        CommandArgs::Evolve(a) => {
            l.model(&a.model)?;
            l.seed(&a.seed)?;
            l.periods(&a.periods)?;
            l.evolution(&a.evolution)?;
            let o: EvolveOnly = layered(&a.only, &file)?;
            let sch = &mut l.cfg.schedule;
            sch.record = o.record.unwrap_or(sch.record);
            sch.at = o.at.unwrap_or_default();
        }
        CommandArgs::QfiScaling(a) => {
            l.model(&a.model)?;
            l.seed(&a.seed)?;
            l.periods(&a.periods)?;
            l.evolution(&a.evolution)?;
            l.derivative(&a.derivative)?;
            let o: ScalingOnly = layered(&a.only, &file)?;
            let s = &mut l.cfg.scan;
            s.variable = o.variable.unwrap_or(s.variable);
            s.metric = o.metric.unwrap_or(s.metric);
            s.atoms = o.atoms.unwrap_or_else(|| s.atoms.clone());
            s.fit_start = o.fit_start.unwrap_or(s.fit_start);
            l.cfg.schedule.at = o.at.unwrap_or_default();
        }
        CommandArgs::FiSweep(a) | CommandArgs::BzSweep(a) | CommandArgs::ErrorPropagation(a) => {
            l.model(&a.model)?;
            l.seed(&a.seed)?;
            l.periods(&a.periods)?;
            l.evolution(&a.evolution)?;
            l.derivative(&a.derivative)?;
            let o: SweepOnly = layered(&a.only, &file)?;
            let s = &mut l.cfg.scan;
            s.values = sweep_values(&o, s.values.clone())?;
            s.atoms = o.atoms.unwrap_or_default();
        }
        CommandArgs::EntropyCut(a) => {
            l.model(&a.model)?;
            l.periods(&a.periods)?;
            l.evolution(&a.evolution)?;
            let o: EntropyCutOnly = layered(&a.only, &file)?;
            let s = &mut l.cfg.scan;
            s.line_phi = o.line_phi.unwrap_or(s.line_phi);
            s.n_theta = o.n_theta.unwrap_or(s.n_theta);
            s.atoms = o.atoms.unwrap_or_else(|| s.atoms.clone());
        }
        CommandArgs::Husimi(a) => {
            l.model(&a.model)?;
            l.seed(&a.seed)?;
            l.periods(&a.periods)?;
            l.evolution(&a.evolution)?;
            l.grid(&a.grid)?;
        }
        CommandArgs::FloquetH(a) => {
            l.model(&a.model)?;
            l.evolution(&a.evolution)?;
        }
        CommandArgs::Replay(_) => unreachable!("handled above"),
    }
    let cfg = l.cfg;
    validate(&cfg)?;
    Ok(Invocation::Run(Box::new(cfg)))
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("invalid value for `{field}`: {reason}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} is not a positive finite number")))
    }
}

fn at_least_one(field: &str, v: usize) -> Result<(), CliError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(field, "must be at least 1"))
    }
}

fn increasing<T: PartialOrd + Copy>(field: &str, v: &[T]) -> Result<(), CliError> {
    if v.windows(2).any(|w| w[0] >= w[1]) {
        Err(invalid(field, "must be strictly increasing"))
    } else {
        Ok(())
    }
}

/// Rejects values that would fail only after compute has started.
pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let m = &cfg.model;
    for n in std::iter::once(m.n_atoms).chain(cfg.scan.atoms.iter().copied()) {
        if !(1..=DEFAULT_MAX_ATOMS).contains(&n) {
            return Err(invalid("n", format!("{n} outside 1..={DEFAULT_MAX_ATOMS}")));
        }
    }
    for (field, v) in [("chi", m.chi), ("bz", m.bz), ("bx", m.bx), ("theta", cfg.seed.theta), ("phi", cfg.seed.phi)] {
        if !v.is_finite() {
            return Err(invalid(field, "must be finite"));
        }
    }
    positive("omega", m.omega)?;
    let n = &cfg.numerics;
    at_least_one("steps", n.steps)?;
    positive("epsilon", n.epsilon)?;
    positive("epsilon_budget", n.epsilon_budget)?;
    positive("richardson_tolerance", n.richardson_tolerance)?;
    positive("probability_floor", n.probability_floor)?;
    at_least_one("rk4_steps", n.rk4_steps)?;
    at_least_one("chaos_boxes", n.chaos_boxes)?;
    if cfg.schedule.periods == 0 {
        return Err(invalid("periods", "must be at least 1"));
    }
    if let Some(&p) = cfg.schedule.at.iter().find(|&&p| p == 0) {
        return Err(invalid("at", format!("period count {p} must be at least 1")));
    }
    increasing("at", &cfg.schedule.at)?;
    let s = &cfg.scan;
    at_least_one("n_theta", s.n_theta)?;
    at_least_one("n_phi", s.n_phi)?;
    at_least_one("seeds_phi", s.seeds_phi)?;
    at_least_one("seeds_z", s.seeds_z)?;
    if !(0.0..=1.0).contains(&s.z_max) {
        return Err(invalid("z_max", "must lie in [0, 1]"));
    }
    if !s.line_phi.is_finite() {
        return Err(invalid("line_phi", "must be finite"));
    }
    increasing("atoms", &s.atoms)?;
    if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
        return Err(invalid("values", format!("{v} is not finite")));
    }
    match cfg.command {
        Command::PhaseMap if s.quantities.is_empty() => {
            return Err(invalid("quantities", "at least one quantity is required"));
        }
        Command::FiSweep | Command::BzSweep | Command::ErrorPropagation if s.values.is_empty() => {
            return Err(invalid("values", "at least one sweep value is required"));
        }
        Command::QfiScaling if s.variable == ScalingVariable::Atoms && s.atoms.len() < 2 => {
            return Err(invalid("atoms", "a scaling fit needs at least two particle numbers"));
        }
        Command::EntropyCut if s.atoms.is_empty() => {
            return Err(invalid("atoms", "at least one particle number is required"));
        }
        Command::EntropyCut if s.n_theta < 2 => {
            return Err(invalid("n_theta", "a line cut needs at least two points"));
        }
        _ => {}
    }
    if cfg.schedule.at.last().is_some_and(|&p| p > cfg.schedule.periods) && cfg.command == Command::Evolve {
        return Err(invalid("at", format!("entries beyond --periods {}", cfg.schedule.periods)));
    }
    Ok(())
}

/// Runtime warnings for settings past the desk-scale envelope.
pub fn scale_warnings(cfg: &RunConfig) -> Vec<String> {
    let mut warnings = Vec::new();
    let largest = cfg.scan.atoms.iter().copied().chain([cfg.model.n_atoms]).max().unwrap_or(0);
    if largest > DESK_MAX_ATOMS && cfg.command != Command::Poincare {
        // Building one propagator costs about 3 minutes at N = 400 and grows as N^3.
        let minutes = 3.0 * (largest as f64 / 400.0).powi(3) * cfg.numerics.steps as f64 / 1000.0;
        warnings.push(format!(
            "N = {largest} is beyond desk scale ({DESK_MAX_ATOMS}); expect roughly {minutes:.0} min per propagator"
        ));
    }
    if cfg.command == Command::PhaseMap {
        let points = cfg.scan.n_theta * cfg.scan.n_phi;
        if points > DESK_MAX_GRID {
            warnings.push(format!("{points} grid points exceed the desk-scale 41x41 grid"));
        }
        if cfg.schedule.periods > DESK_MAX_MAP_PERIODS {
            warnings.push(format!(
                "{} periods exceed the desk-scale map horizon of {DESK_MAX_MAP_PERIODS}",
                cfg.schedule.periods
            ));
        }
    }
    warnings
}
