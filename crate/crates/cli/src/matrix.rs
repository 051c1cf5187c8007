//! Parallel execution of scenario cells × replications.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use sovm_core::config::{ScenarioConfig, SimSetup};
use sovm_core::engine::{run, RunLog, RunOptions};
use sovm_core::scenario::ScenarioSpec;

use crate::artifacts::write_run_artifacts;
use crate::summary::{aggregate, RepSummary, Summary};
use crate::{io_err, CliError};

#[derive(Debug, Clone, Copy)]
pub struct MatrixOptions {
    pub workers: usize,
    pub run: RunOptions,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        MatrixOptions {
            workers: 4,
            run: RunOptions::default(),
        }
    }
}

static STAGING_SEQ: AtomicU64 = AtomicU64::new(0);

/// Directory of replication `k` below the output root.
pub fn rep_dir(root: &Path, spec: &ScenarioSpec, k: u32) -> PathBuf {
    root.join(spec.dir_name()).join(format!("rep{k}"))
}

/// Runs every replication of every cell and writes the artifacts and
/// `summary.json` under `out`.
pub fn run_cells(
    cfg: &ScenarioConfig,
    specs: &[ScenarioSpec],
    out: &Path,
    opts: MatrixOptions,
) -> Result<Summary, CliError> {
    run_cells_with(cfg, specs, out, opts, |setup, seed, o| Ok(run(setup, seed, o)))
}

/// [`run_cells`] with a custom runner. A runner error or panic aborts the
/// whole batch, naming the scenario, and leaves nothing behind in `out`.
pub fn run_cells_with<F>(
    cfg: &ScenarioConfig,
    specs: &[ScenarioSpec],
    out: &Path,
    opts: MatrixOptions,
    runner: F,
) -> Result<Summary, CliError>
where
    F: Fn(&SimSetup, u64, RunOptions) -> Result<RunLog, String> + Sync,
{
    let mut setups = Vec::with_capacity(specs.len());
    for spec in specs {
        let setup = cfg
            .resolve(spec)
            .map_err(|e| CliError::Invalid(format!("scenario {}: {e}", spec.label())))?;
        setups.push(setup);
    }

    let created = !out.exists();
    fs::create_dir_all(out).map_err(|e| io_err("creating", out, e))?;
    let staging = out.join(format!(
        ".staging-{}-{}",
        std::process::id(),
        STAGING_SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io_err("clearing", &staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| io_err("creating", &staging, e))?;

    let result = execute(cfg, specs, &setups, &staging, opts, &runner).and_then(|summary| {
        let path = staging.join("summary.json");
        fs::write(&path, summary.to_json()).map_err(|e| io_err("writing", &path, e))?;
        publish(&staging, out)?;
        Ok(summary)
    });
    let _ = fs::remove_dir_all(&staging);
    if result.is_err() && created {
        let _ = fs::remove_dir(out);
    }
    result
}

fn execute<F>(
    cfg: &ScenarioConfig,
    specs: &[ScenarioSpec],
    setups: &[SimSetup],
    staging: &Path,
    opts: MatrixOptions,
    runner: &F,
) -> Result<Summary, CliError>
where
    F: Fn(&SimSetup, u64, RunOptions) -> Result<RunLog, String> + Sync,
{
    let jobs: Vec<(usize, u32)> = specs
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.replications).map(move |k| (i, k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("starting worker pool: {e}")))?;

    let results: Result<Vec<((String, u32), RepSummary)>, CliError> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, k)| {
                let spec = &specs[i];
                let setup = &setups[i];
                let label = spec.label();
                let seed = spec.replication_seed(k);
                let log = catch_unwind(AssertUnwindSafe(|| runner(setup, seed, opts.run)))
                    .unwrap_or_else(|p| {
                        Err(p
                            .downcast_ref::<&str>()
                            .map(|s| s.to_string())
                            .or_else(|| p.downcast_ref::<String>().cloned())
                            .unwrap_or_else(|| "panic".into()))
                    })
                    .map_err(|e| {
                        CliError::Runtime(format!("scenario {label} replication {k} failed: {e}"))
                    })?;
                write_run_artifacts(&rep_dir(staging, spec, k), setup, &log)?;
                let summary = RepSummary::from_log(k, &log, &setup.safety);
                Ok(((label, k), summary))
            })
            .collect()
    });
    aggregate(cfg, specs, results?)
}

/// Moves everything from `staging` into `out`, replacing same-named entries.
fn publish(staging: &Path, out: &Path) -> Result<(), CliError> {
    let entries = fs::read_dir(staging).map_err(|e| io_err("reading", staging, e))?;
    let mut names: Vec<_> = entries
        .map(|e| e.map(|e| e.file_name()))
        .collect::<Result<_, _>>()
        .map_err(|e| io_err("reading", staging, e))?;
    names.sort();
    for name in names {
        let to = out.join(&name);
        if to.is_dir() {
            fs::remove_dir_all(&to).map_err(|e| io_err("replacing", &to, e))?;
        } else if to.exists() {
            fs::remove_file(&to).map_err(|e| io_err("replacing", &to, e))?;
        }
        let from = staging.join(&name);
        fs::rename(&from, &to).map_err(|e| io_err("moving", &from, e))?;
    }
    Ok(())
}
