//! wattsweep command-line driver.
//!
//! Subcommands mirror the pipeline stages: `sweep` measures (or resumes) a
//! grid, `analyze` turns records into reports, `policy` synthesizes and
//! queries clock policies, `calibrate` refits architecture profiles from
//! bench fixtures, and `simulate` runs a single cell for inspection.
//!
//! Exit codes are stable per error family so scripts can branch on them:
//! 0 success; 2 configuration or usage; 3 backend unavailable; 4 record
//! data corrupt; 5 analysis failed; 6 calibration conflict; 7 run finished
//! but produced failures or data-quality flags.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wattsweep::analysis::reports::write_all_reports;
use wattsweep::analysis::SweepTable;
use wattsweep::backend::real::{RealBackend, RealBackendConfig};
use wattsweep::backend::{Backend, PhaseSpec};
use wattsweep::calibration::{
    fit_profiles, read_power_fixtures, read_time_fixtures, DEFAULT_CALIBRATION_TOL,
};
use wattsweep::config::ConfigError;
use wattsweep::device::ControlLever;
use wattsweep::orchestrator::{aggregate, config_id, derive_rng_seed, read_records, run_sweep};
use wattsweep::policy::PolicyPhase;
use wattsweep::{
    AppConfig, DeviceSpec, PolicyTable, ProfileSet, Scalar, SimBackend, WorkloadRequest,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_ANALYSIS: u8 = 5;
const EXIT_CALIBRATION: u8 = 6;
const EXIT_FLAGGED: u8 = 7;

#[derive(Debug)]
struct CliError {
    exit: u8,
    message: String,
}

impl CliError {
    fn new(exit: u8, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }
}

macro_rules! from_error {
    ($ty:ty, $exit:expr) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($exit, e.to_string())
            }
        }
    };
}

from_error!(ConfigError, EXIT_CONFIG);
from_error!(wattsweep::device::DeviceError, EXIT_CONFIG);
from_error!(wattsweep::workload::WorkloadError, EXIT_CONFIG);
from_error!(wattsweep::orchestrator::OrchestratorError, EXIT_DATA);
from_error!(wattsweep::analysis::AnalysisError, EXIT_ANALYSIS);
from_error!(wattsweep::policy::PolicyError, EXIT_ANALYSIS);
from_error!(wattsweep::calibration::CalibrationError, EXIT_CALIBRATION);

impl From<wattsweep::backend::BackendError> for CliError {
    fn from(e: wattsweep::backend::BackendError) -> Self {
        CliError::new(EXIT_BACKEND, e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "wattsweep",
    version,
    about = "GPU energy sweeps, per-phase analysis, and clock-policy synthesis"
)]
struct Cli {
    /// Configuration TOML; omitted fields take built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the sweep seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Measurement backend.
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Sim)]
    backend: BackendKind,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Calibrated analytical simulator.
    Sim,
    /// Real device via the management utility.
    Real,
}

#[derive(Subcommand)]
enum Command {
    /// Write a default configuration TOML to the --config path.
    ConfigInit(ConfigInitArgs),
    /// Run or resume the configured sweep, appending to the record sink.
    Sweep,
    /// Aggregate records and write the report set.
    Analyze(AnalyzeArgs),
    /// Clock-policy synthesis and lookup.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Refit architecture profiles from bench fixture CSVs.
    Calibrate(CalibrateArgs),
    /// Run a single cell and print the record as JSON.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ConfigInitArgs {
    /// Overwrite an existing file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Record sink to analyze (default: <output_dir>/records.jsonl).
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Synthesize a policy TOML from sweep records.
    Synth(PolicySynthArgs),
    /// Look up the clock for a workload point.
    Apply(PolicyApplyArgs),
}

#[derive(Args)]
struct PolicySynthArgs {
    /// Record sink to synthesize from (default: <output_dir>/records.jsonl).
    #[arg(long)]
    records: Option<PathBuf>,
    /// Output path (default: <output_dir>/policy.toml).
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyApplyArgs {
    /// Policy TOML produced by `policy synth`.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    arch: String,
    #[arg(long, value_parser = ["prefill", "decode"])]
    phase: String,
    #[arg(long)]
    batch: u32,
    #[arg(long)]
    context: u32,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Steady-state power fixture CSV.
    #[arg(long)]
    power_fixtures: PathBuf,
    /// Wall-time fixture CSV.
    #[arg(long)]
    time_fixtures: PathBuf,
    /// Prior profiles TOML (default: the configured profile set).
    #[arg(long)]
    priors: Option<PathBuf>,
    /// Output path for the fitted profiles.
    #[arg(long)]
    fitted: PathBuf,
    /// Relative tolerance for consistency checks.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_TOL)]
    tol: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    arch: String,
    #[arg(long, value_parser = ["prefill", "decode"])]
    phase: String,
    #[arg(long)]
    batch: u32,
    #[arg(long)]
    context: u32,
    /// Lever label: free_run, lock_<mhz>, or cap_<watts>.
    #[arg(long, default_value = "free_run")]
    lever: String,
    /// Decode output tokens per sequence.
    #[arg(long, default_value_t = 64)]
    output_tokens: u32,
    /// Repetition index (changes only the noise stream).
    #[arg(long, default_value_t = 0)]
    rep: u32,
    /// Keep the power trace in the printed record.
    #[arg(long)]
    keep_trace: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let mut config: AppConfig = match &cli.config {
        Some(path) if path.exists() => AppConfig::load_toml(path)?,
        Some(path) => {
            if !matches!(cli.command, Command::ConfigInit(_)) {
                return Err(CliError::new(
                    EXIT_CONFIG,
                    format!("config file {} does not exist", path.display()),
                ));
            }
            AppConfig::default()
        }
        None => AppConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.grid.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }

    match &cli.command {
        Command::ConfigInit(args) => config_init(&cli, &config, args),
        Command::Sweep => sweep(&cli, &config),
        Command::Analyze(args) => analyze(&config, args),
        Command::Policy(PolicyCommand::Synth(args)) => policy_synth(&config, args),
        Command::Policy(PolicyCommand::Apply(args)) => policy_apply(args),
        Command::Calibrate(args) => calibrate(&config, args),
        Command::Simulate(args) => simulate(&config, args),
    }
}

fn load_device(config: &AppConfig) -> Result<DeviceSpec, CliError> {
    Ok(match &config.device_spec_path {
        Some(path) => DeviceSpec::load_toml(path)?,
        None => DeviceSpec::h200(),
    })
}

fn load_profiles(config: &AppConfig) -> Result<ProfileSet, CliError> {
    let profiles = match &config.profiles_path {
        Some(path) => ProfileSet::load_toml(path)?,
        None => ProfileSet::defaults(),
    };
    profiles.validate()?;
    Ok(profiles)
}

fn make_backend(cli: &Cli, config: &AppConfig) -> Result<Box<dyn Backend<Scalar>>, CliError> {
    let device = load_device(config)?;
    match cli.backend {
        BackendKind::Sim => {
            let profiles = load_profiles(config)?;
            Ok(Box::new(
                SimBackend::new(device, profiles).with_noise(config.noise),
            ))
        }
        BackendKind::Real => {
            let backend = RealBackend::probe(device, RealBackendConfig::default())?;
            Ok(Box::new(backend))
        }
    }
}

fn records_path(config: &AppConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| config.output_dir.join("records.jsonl"))
}

fn load_table(path: &Path) -> Result<(SweepTable<Scalar>, bool), CliError> {
    if !path.exists() {
        return Err(CliError::new(
            EXIT_DATA,
            format!(
                "record sink {} does not exist (run `wattsweep sweep` first)",
                path.display()
            ),
        ));
    }
    let (records, truncated) = read_records::<Scalar>(path)?;
    if truncated {
        eprintln!("note: dropped a truncated trailing record (crash mid-write?)");
    }
    let cells = aggregate(&records);
    Ok((SweepTable::from_cells(cells), truncated))
}

fn config_init(cli: &Cli, config: &AppConfig, args: &ConfigInitArgs) -> Result<u8, CliError> {
    let path = cli
        .config
        .clone()
        .unwrap_or_else(|| PathBuf::from("config.toml"));
    if path.exists() && !args.force {
        return Err(CliError::new(
            EXIT_CONFIG,
            format!(
                "{} already exists (use --force to overwrite)",
                path.display()
            ),
        ));
    }
    config.save_toml(&path)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn sweep(cli: &Cli, config: &AppConfig) -> Result<u8, CliError> {
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?;
    let path = records_path(config, &None);
    let mut backend = make_backend(cli, config)?;
    let outcome = run_sweep(backend.as_mut(), &config.grid, &path)?;
    println!(
        "sweep: planned {} runs, executed {}, resumed past {}, failures {}",
        outcome.planned,
        outcome.executed,
        outcome.skipped_resume,
        outcome.failures.len()
    );
    println!("records: {}", path.display());
    for f in outcome.failures.iter().take(5) {
        eprintln!(
            "failed: {} {} rep {}: {}",
            f.arch, f.config_id, f.rep_index, f.error
        );
    }
    Ok(if outcome.failures.is_empty() {
        0
    } else {
        EXIT_FLAGGED
    })
}

fn analyze(config: &AppConfig, args: &AnalyzeArgs) -> Result<u8, CliError> {
    let path = records_path(config, &args.records);
    let (table, truncated) = load_table(&path)?;
    let reports_dir = config.output_dir.join("reports");
    let manifest = write_all_reports(
        &table,
        &reports_dir,
        config.throughput_budget,
        Some(config.grid.seed),
        Some(config.digest()?),
    )?;
    println!(
        "analyze: {} cells -> {} ({} files)",
        manifest.cells,
        reports_dir.display(),
        manifest.files.len()
    );
    let flagged = manifest.noise_flagged_cells
        + manifest.gap_flagged_cells
        + manifest.counter_disagree_cells
        + manifest.throttle_artefact_cells;
    println!(
        "flags: noise {}, gaps {}, counter disagreements {}, throttle artefacts {}",
        manifest.noise_flagged_cells,
        manifest.gap_flagged_cells,
        manifest.counter_disagree_cells,
        manifest.throttle_artefact_cells
    );
    Ok(if flagged > 0 || truncated {
        EXIT_FLAGGED
    } else {
        0
    })
}

fn policy_synth(config: &AppConfig, args: &PolicySynthArgs) -> Result<u8, CliError> {
    let path = records_path(config, &args.records);
    let (table, _) = load_table(&path)?;
    let policy = PolicyTable::synthesize(&table, config.throughput_budget)?;
    let out = args
        .policy
        .clone()
        .unwrap_or_else(|| config.output_dir.join("policy.toml"));
    policy.save_toml(&out)?;
    for arch in &policy.arches {
        println!(
            "{}: {:?}, prefill {} MHz, {} context band(s)",
            arch.arch,
            arch.class,
            arch.prefill_clock_mhz,
            arch.bands.len()
        );
    }
    println!("policy: {}", out.display());
    Ok(0)
}

fn policy_apply(args: &PolicyApplyArgs) -> Result<u8, CliError> {
    let policy: PolicyTable = PolicyTable::load_toml(&args.policy)?;
    let phase = if args.phase == "prefill" {
        PolicyPhase::Prefill
    } else {
        PolicyPhase::Decode
    };
    let decision = policy.apply(&args.arch, phase, args.batch, args.context)?;
    println!(
        "{}",
        serde_json::to_string(&decision)
            .map_err(|e| CliError::new(EXIT_ANALYSIS, e.to_string()))?
    );
    Ok(0)
}

fn calibrate(config: &AppConfig, args: &CalibrateArgs) -> Result<u8, CliError> {
    let device = load_device(config)?;
    let priors = match &args.priors {
        Some(path) => ProfileSet::load_toml(path)?,
        None => load_profiles(config)?,
    };
    let power = read_power_fixtures(&args.power_fixtures)?;
    let times = read_time_fixtures(&args.time_fixtures)?;
    let outcome = fit_profiles(&device, &priors, &power, &times, args.tol)?;
    outcome.profiles.save_toml(&args.fitted)?;
    for r in &outcome.report {
        let held = if r.held.is_empty() {
            "all parameters identified".to_string()
        } else {
            format!("held at prior: {}", r.held.join(", "))
        };
        println!(
            "{}: {} anchors, worst residual {:.2e}, {}",
            r.arch, r.anchors_used, r.max_rel_residual, held
        );
    }
    println!("fitted profiles: {}", args.fitted.display());
    Ok(0)
}

fn simulate(config: &AppConfig, args: &SimulateArgs) -> Result<u8, CliError> {
    let device = load_device(config)?;
    let profiles = load_profiles(config)?;
    let mut backend = SimBackend::new(device, profiles).with_noise(config.noise);
    let phase = if args.phase == "prefill" {
        PhaseSpec::Prefill {
            batch: args.batch,
            context: args.context,
        }
    } else {
        PhaseSpec::Decode {
            batch: args.batch,
            context: args.context,
            output_tokens: args.output_tokens,
        }
    };
    let lever: ControlLever<Scalar> = ControlLever::parse_label(&args.lever)?;
    let id = config_id(&args.arch, &phase, &lever);
    let request = WorkloadRequest {
        arch: args.arch.clone(),
        phase,
        lever,
        config_id: id.clone(),
        rep_index: args.rep,
        warmup: false,
        rng_seed: derive_rng_seed(config.grid.seed, &id, args.rep),
        keep_trace: args.keep_trace,
    };
    let record = backend.run(&request)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&record)
            .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?
    );
    Ok(0)
}
