//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sovm_core::calibration::{
    build_f_table, calibrate, extract_episodes, load_trajectories, CalibrationError, CalibrationOptions,
    ObservedEpisode, DEFAULT_BIN_WIDTH, DEFAULT_MAX_TTC, PARAM_BOUNDS,
};
use sovm_core::config::{profile, DriverModel, ScenarioConfig};
use sovm_core::engine::RunOptions;
use sovm_core::kernel::{CfParams, MovementClass, ObservedAccelTable, TauUnit};
use sovm_core::scenario::ScenarioSpec;

use crate::matrix::{run_cells, MatrixOptions};
use crate::summary::{render_tables, Summary, View};
use crate::CliError;

/// Worker limit for the matrix, overriding the configuration.
pub const ENV_WORKERS: &str = "SOVM_WORKERS";
/// Output directory used when `--out` is absent.
pub const ENV_OUT: &str = "SOVM_OUT";
pub const DEFAULT_OUT: &str = "sovm-out";

#[derive(Debug, Parser)]
#[command(name = "sovm", version, about = "Signalized-intersection microsimulation with a TTC-driven optimal velocity model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario cell (all replications).
    Run(RunArgs),
    /// Run every cell of the volume × speed × plan matrix.
    Matrix(MatrixArgs),
    /// Fit safety-OVM parameters to observed trajectories.
    Calibrate(CalibrateArgs),
    /// Build the observed-acceleration table from trajectories.
    Ftable(FtableArgs),
    /// Print the tables of an existing summary.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML). The built-in default scenario when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory [env: SOVM_OUT, default: sovm-out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub replications: Option<u32>,
    /// `baseline` or `safety-ovm`.
    #[arg(long, value_name = "MODEL")]
    pub driver_model: Option<DriverModel>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Scenario cell such as `2V_65:split-phasing`, overriding the file.
    #[arg(long, value_name = "LABEL")]
    pub cell: Option<String>,
    /// Also write trajectories.csv and cf_episodes.json per run.
    #[arg(long)]
    pub export_trajectories: bool,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Concurrent runs [env: SOVM_WORKERS].
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_name = "PATH")]
    pub trajectories: PathBuf,
    /// `through` or `turning`.
    #[arg(long)]
    pub movement: MovementClass,
    /// Start point: `profile`, `midpoint`, or five comma-separated values
    /// `delta_s,beta,tau,v_o,alpha`.
    #[arg(long, default_value = "profile")]
    pub init: String,
    #[arg(long, default_value_t = 20_000)]
    pub budget: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Observed-acceleration table (JSON) instead of building one from the data.
    #[arg(long, value_name = "PATH", conflicts_with = "no_ftable")]
    pub ftable: Option<PathBuf>,
    /// Fit with f ≡ 0.
    #[arg(long)]
    pub no_ftable: bool,
    /// `steps` or `seconds`.
    #[arg(long, default_value = "steps", value_parser = parse_tau_unit)]
    pub tau_unit: TauUnit,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 4.5)]
    pub vehicle_length: f64,
    /// Report file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FtableArgs {
    #[arg(long, value_name = "PATH")]
    pub trajectories: PathBuf,
    /// Restrict to one movement class.
    #[arg(long)]
    pub movement: Option<MovementClass>,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_TTC)]
    pub max_ttc: f64,
    #[arg(long, default_value_t = 4.5)]
    pub vehicle_length: f64,
    /// Table file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A summary.json, or a directory containing one.
    #[arg(value_name = "PATH")]
    pub summary: PathBuf,
    /// `counts`, `percentages` or `both`.
    #[arg(long, default_value = "both")]
    pub view: View,
}

fn parse_tau_unit(s: &str) -> Result<TauUnit, String> {
    match s {
        "steps" => Ok(TauUnit::Steps),
        "seconds" => Ok(TauUnit::Seconds),
        other => Err(format!("unknown tau unit '{other}' (steps, seconds)")),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 invalid input, 2 runtime failure.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => cmd_run(a),
        Command::Matrix(a) => cmd_matrix(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Ftable(a) => cmd_ftable(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_config(a: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::from_file(p).map_err(|e| CliError::Invalid(e.to_string()))?,
        None => ScenarioConfig::builtin(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.replications {
        cfg.replications = n;
    }
    if let Some(m) = a.driver_model {
        cfg.run.driver_model = m;
    }
    cfg.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(cfg)
}

fn out_dir(a: &ScenarioArgs) -> PathBuf {
    a.out
        .clone()
        .or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn workers(flag: Option<usize>, cfg: &ScenarioConfig) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n.max(1));
    }
    match std::env::var(ENV_WORKERS) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| n.max(1))
            .map_err(|_| CliError::Invalid(format!("{ENV_WORKERS}='{v}' is not a positive integer"))),
        Err(_) => Ok(cfg.matrix.workers.max(1)),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn stdout(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn finish(summary: &Summary, out: &Path) {
    stdout(&render_tables(summary, View::Both));
    stdout(&format!("\nwrote {}\n", out.join("summary.json").display()));
}

fn cmd_run(a: RunArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&a.scenario)?;
    if let Some(label) = &a.cell {
        let (volume, speed, plan) =
            ScenarioSpec::parse_label(label).map_err(|e| CliError::Invalid(e.to_string()))?;
        cfg.scenario.volume = volume;
        cfg.scenario.speed = speed;
        cfg.scenario.plan = plan;
    }
    let out = out_dir(&a.scenario);
    let opts = MatrixOptions {
        workers: workers(None, &cfg)?,
        run: RunOptions {
            trajectories: a.export_trajectories,
            car_following: a.export_trajectories,
        },
    };
    let summary = run_cells(&cfg, &[cfg.spec()], &out, opts)?;
    finish(&summary, &out);
    Ok(())
}

fn cmd_matrix(a: MatrixArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.scenario)?;
    let out = out_dir(&a.scenario);
    let opts = MatrixOptions {
        workers: workers(a.workers, &cfg)?,
        run: RunOptions::default(),
    };
    let summary = run_cells(&cfg, &cfg.matrix_specs(), &out, opts)?;
    finish(&summary, &out);
    Ok(())
}

fn data_err(path: &Path, e: CalibrationError) -> CliError {
    match e {
        CalibrationError::Io(e) => CliError::Runtime(format!("{}: {e}", path.display())),
        other => CliError::Invalid(format!("{}: {other}", path.display())),
    }
}

fn read_episodes(path: &Path, vehicle_length: f64) -> Result<Vec<ObservedEpisode>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Invalid(format!("cannot open {}: {e}", path.display())))?;
    let points = load_trajectories(std::io::BufReader::new(file)).map_err(|e| data_err(path, e))?;
    Ok(extract_episodes(&points, vehicle_length))
}

fn emit(out: &Option<PathBuf>, text: String) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| crate::io_err("writing", p, e)),
        None => {
            stdout(&text);
            stdout("\n");
            Ok(())
        }
    }
}

/// Parses `--init`.
pub fn parse_init(s: &str, movement: MovementClass) -> Result<CfParams, CliError> {
    match s {
        "profile" => {
            let (through, turning) = profile("blacksburg-pm").map_err(|e| CliError::Invalid(e.to_string()))?;
            Ok(match movement {
                MovementClass::Through => through,
                MovementClass::Turning => turning,
            })
        }
        "midpoint" => {
            let mut a = [0.0; 5];
            for (k, (lo, hi)) in PARAM_BOUNDS.into_iter().enumerate() {
                a[k] = 0.5 * (lo + hi);
            }
            Ok(CfParams::from_array(a))
        }
        list => {
            let vals: Vec<f64> = list
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Invalid(format!("--init '{list}': {e}")))?;
            let arr: [f64; 5] = vals
                .try_into()
                .map_err(|_| CliError::Invalid(format!("--init '{list}': need five values")))?;
            let p = CfParams::from_array(arr);
            p.validate().map_err(|e| CliError::Invalid(format!("--init '{list}': {e}")))?;
            Ok(p)
        }
    }
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    let init = parse_init(&a.init, a.movement)?;
    let episodes = read_episodes(&a.trajectories, a.vehicle_length)?;
    let mine: Vec<ObservedEpisode> = episodes.into_iter().filter(|e| e.movement == a.movement).collect();
    if mine.is_empty() {
        return Err(CliError::Invalid(format!(
            "{}: no car-following episodes for movement {}",
            a.trajectories.display(),
            a.movement
        )));
    }
    let f = if a.no_ftable {
        ObservedAccelTable::empty()
    } else if let Some(p) = &a.ftable {
        let text = fs::read_to_string(p).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", p.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?
    } else {
        build_f_table(&mine, DEFAULT_BIN_WIDTH, DEFAULT_MAX_TTC).map_err(|e| CliError::Invalid(e.to_string()))?
    };
    let opts = CalibrationOptions {
        budget: a.budget,
        restarts: a.restarts,
        seed: a.seed,
        tau_unit: a.tau_unit,
        dt: a.dt,
        ..CalibrationOptions::default()
    };
    let report = calibrate(&mine, a.movement, init, &f, &opts).map_err(|e| CliError::Invalid(e.to_string()))?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    emit(&a.out, text)
}

fn cmd_ftable(a: FtableArgs) -> Result<(), CliError> {
    let mut episodes = read_episodes(&a.trajectories, a.vehicle_length)?;
    if let Some(m) = a.movement {
        episodes.retain(|e| e.movement == m);
    }
    let table = build_f_table(&episodes, a.bin_width, a.max_ttc)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", a.trajectories.display())))?;
    let text = serde_json::to_string_pretty(&table).map_err(|e| CliError::Runtime(e.to_string()))?;
    emit(&a.out, text)
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    let path = if a.summary.is_dir() {
        a.summary.join("summary.json")
    } else {
        a.summary.clone()
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let summary: Summary =
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    stdout(&render_tables(&summary, a.view));
    Ok(())
}
