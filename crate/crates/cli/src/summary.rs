//! `summary.json` and the stdout tables.
//!
//! Schema (`sovm-summary/1`), top level:
//!
//! | key | meaning |
//! |---|---|
//! | `schema` | always `"sovm-summary/1"` |
//! | `name`, `seed`, `replications`, `driver_model` | from the configuration |
//! | `dt_s`, `warmup_s`, `horizon_s` | run timing |
//! | `thresholds` | record, critical and severe TTC, episode gap tolerance |
//! | `scenarios` | one entry per scenario cell, in matrix order |
//!
//! Each scenario carries `label`, `cell`, `volume`, `speed`, `plan`, `dir`
//! (the artifact directory), `runs` (one [`RepSummary`] per replication, by
//! index) and `aggregate` (mean and sample standard deviation over runs).
//!
//! Two readings of the severe (≤ 1.0 s) count are reported side by side:
//! `vehicles_1_0` counts distinct following vehicles with at least one such
//! instance, `critical_episodes_1_0` counts car-following episodes whose
//! minimum TTC reached it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sovm_core::config::{DriverModel, SafetyConfig, ScenarioConfig};
use sovm_core::engine::RunLog;
use sovm_core::safety::{run_safety, RunSafety};
use sovm_core::scenario::{ScenarioSpec, SpeedCap, Volume};
use sovm_core::signal::PlanKind;

use crate::CliError;

pub const SCHEMA: &str = "sovm-summary/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSummary {
    pub replication: u32,
    pub seed: u64,
    pub safety: RunSafety,
    pub overlaps: u64,
    pub emergency_brakes: u64,
    pub uncommitted_red_crossings: u64,
    pub in_network_end: u64,
}

impl RepSummary {
    pub fn from_log(replication: u32, log: &RunLog, safety: &SafetyConfig) -> RepSummary {
        RepSummary {
            replication,
            seed: log.seed,
            safety: run_safety(
                &log.conflicts,
                log.total_vehicles(),
                safety.episode_gap_s,
                safety.critical_ttc_s,
                safety.severe_ttc_s,
            ),
            overlaps: log.overlaps.len() as u64,
            emergency_brakes: log.counters.emergency_brakes,
            uncommitted_red_crossings: log.counters.red_crossings_uncommitted,
            in_network_end: log.in_network_end,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len();
        if n == 0 {
            return Stat { mean: 0.0, std: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub total_vehicles: Stat,
    pub conflict_records: Stat,
    pub critical_episodes_1_5: Stat,
    pub critical_episodes_1_0: Stat,
    /// Critical episodes (≤ 1.5 s) per 100 vehicles of measured volume.
    pub critical_episode_pct: Stat,
    pub vehicles_1_5: Stat,
    pub vehicles_1_0: Stat,
    pub vehicle_fraction_1_5: Stat,
    pub vehicle_fraction_1_0: Stat,
    pub beyond_stop_bar_share: Stat,
}

impl Aggregate {
    fn of(runs: &[RepSummary]) -> Aggregate {
        let col = |f: fn(&RunSafety) -> f64| Stat::of(&runs.iter().map(|r| f(&r.safety)).collect::<Vec<_>>());
        Aggregate {
            total_vehicles: col(|s| s.total_vehicles as f64),
            conflict_records: col(|s| s.conflict_records as f64),
            critical_episodes_1_5: col(|s| s.critical_episodes_1_5 as f64),
            critical_episodes_1_0: col(|s| s.critical_episodes_1_0 as f64),
            critical_episode_pct: col(|s| s.critical_episode_pct),
            vehicles_1_5: col(|s| s.vehicles_1_5 as f64),
            vehicles_1_0: col(|s| s.vehicles_1_0 as f64),
            vehicle_fraction_1_5: col(|s| s.vehicle_fraction_1_5),
            vehicle_fraction_1_0: col(|s| s.vehicle_fraction_1_0),
            beyond_stop_bar_share: col(|s| s.beyond_stop_bar_share),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub cell: String,
    pub volume: Volume,
    pub speed: SpeedCap,
    pub plan: PlanKind,
    pub dir: String,
    pub runs: Vec<RepSummary>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub record_ttc_s: f64,
    pub critical_ttc_s: f64,
    pub severe_ttc_s: f64,
    pub episode_gap_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub name: String,
    pub seed: u64,
    pub replications: u32,
    pub driver_model: DriverModel,
    pub dt_s: f64,
    pub warmup_s: f64,
    pub horizon_s: f64,
    pub thresholds: Thresholds,
    pub scenarios: Vec<ScenarioSummary>,
}

impl Summary {
    pub fn scenario(&self, label: &str) -> Option<&ScenarioSummary> {
        self.scenarios.iter().find(|s| s.label == label)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Reduces per-run results into a summary. The result depends only on the
/// set of `((label, replication), run)` pairs, not on their order.
pub fn aggregate(
    cfg: &ScenarioConfig,
    specs: &[ScenarioSpec],
    results: impl IntoIterator<Item = ((String, u32), RepSummary)>,
) -> Result<Summary, CliError> {
    let mut keyed: BTreeMap<(String, u32), RepSummary> = BTreeMap::new();
    for (key, r) in results {
        if keyed.insert(key.clone(), r).is_some() {
            return Err(CliError::Runtime(format!(
                "duplicate result for {} replication {}",
                key.0, key.1
            )));
        }
    }
    let mut scenarios = Vec::with_capacity(specs.len());
    for spec in specs {
        let label = spec.label();
        let mut runs = Vec::with_capacity(spec.replications as usize);
        for k in 0..spec.replications {
            let r = keyed.remove(&(label.clone(), k)).ok_or_else(|| {
                CliError::Runtime(format!("missing result for {label} replication {k}"))
            })?;
            runs.push(r);
        }
        scenarios.push(ScenarioSummary {
            cell: spec.cell_label(),
            volume: spec.volume,
            speed: spec.speed,
            plan: spec.plan,
            dir: spec.dir_name(),
            aggregate: Aggregate::of(&runs),
            runs,
            label,
        });
    }
    if let Some(((label, k), _)) = keyed.into_iter().next() {
        return Err(CliError::Runtime(format!(
            "result for {label} replication {k} matches no scenario"
        )));
    }
    let s = &cfg.safety;
    Ok(Summary {
        schema: SCHEMA.to_string(),
        name: cfg.name.clone(),
        seed: cfg.seed,
        replications: specs.first().map_or(cfg.replications, |s| s.replications),
        driver_model: cfg.run.driver_model,
        dt_s: cfg.run.dt_s,
        warmup_s: cfg.run.warmup_s,
        horizon_s: cfg.run.horizon_s,
        thresholds: Thresholds {
            record_ttc_s: s.record_ttc_s,
            critical_ttc_s: s.critical_ttc_s,
            severe_ttc_s: s.severe_ttc_s,
            episode_gap_s: s.episode_gap_s,
        },
        scenarios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Counts,
    Percentages,
    Both,
}

impl std::str::FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "counts" => Ok(View::Counts),
            "percentages" => Ok(View::Percentages),
            "both" => Ok(View::Both),
            other => Err(format!("unknown view '{other}' (counts, percentages, both)")),
        }
    }
}

fn table(summary: &Summary, title: &str, cell: impl Fn(&Aggregate) -> Stat, prec: usize) -> String {
    let mut cells: Vec<&str> = Vec::new();
    let mut plans: Vec<PlanKind> = Vec::new();
    for sc in &summary.scenarios {
        if !cells.contains(&sc.cell.as_str()) {
            cells.push(&sc.cell);
        }
        if !plans.contains(&sc.plan) {
            plans.push(sc.plan);
        }
    }
    let width = 18;
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<8}", "cell");
    for p in &plans {
        let _ = write!(out, "{:>width$}", p.as_str());
    }
    out.push('\n');
    for c in &cells {
        let _ = write!(out, "{c:<8}");
        for p in &plans {
            let entry = summary
                .scenarios
                .iter()
                .find(|s| s.cell == *c && s.plan == *p)
                .map(|s| {
                    let st = cell(&s.aggregate);
                    format!("{:.prec$} ± {:.prec$}", st.mean, st.std)
                })
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, "{entry:>width$}");
        }
        out.push('\n');
    }
    out
}

/// Plain-text tables of critical car-following episodes per scenario:
/// absolute counts and percentages of total volume, mean ± sd over runs.
pub fn render_tables(summary: &Summary, view: View) -> String {
    let t = &summary.thresholds;
    let n = summary.replications;
    let mut out = String::new();
    if matches!(view, View::Counts | View::Both) {
        out.push_str(&table(
            summary,
            &format!(
                "Car-following episodes with TTC <= {} s (count, mean ± sd over {n} runs)",
                t.critical_ttc_s
            ),
            |a| a.critical_episodes_1_5,
            1,
        ));
    }
    if view == View::Both {
        out.push('\n');
    }
    if matches!(view, View::Percentages | View::Both) {
        out.push_str(&table(
            summary,
            &format!(
                "Car-following episodes with TTC <= {} s (% of total volume, mean ± sd over {n} runs)",
                t.critical_ttc_s
            ),
            |a| a.critical_episode_pct,
            3,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_sample_std() {
        let s = Stat::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean, 5.0);
        assert!((s.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of(&[3.0]).std, 0.0);
    }
}
