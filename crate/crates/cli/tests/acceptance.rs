//! Acceptance checks. Prints one line per criterion and fails if any fails.

use std::fs;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use sovm_cli::artifacts::conflicts_csv;
use sovm_cli::matrix::{rep_dir, run_cells, MatrixOptions};
use sovm_cli::summary::Summary;
use sovm_core::calibration::*;
use sovm_core::config::{DriverModel, ScenarioConfig, SimSetup};
use sovm_core::engine::{cf_episodes, run, RunLog, RunOptions};
use sovm_core::kernel::*;
use sovm_core::safety::ConflictRecord;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn kernel_exactness() -> Outcome {
    let grid: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/kernel_grid.json")).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let f = ObservedAccelTable::empty();
    let b = AccelBounds::default();
    let mut worst = 0.0f64;
    for (name, p) in [("through", CfParams::BLACKSBURG_THROUGH), ("turning", CfParams::BLACKSBURG_TURNING)] {
        let rows = grid[name].as_array().ok_or("fixture shape")?;
        for (k, row) in rows.iter().enumerate() {
            let ttc = 10.0 * k as f64 / 199.0;
            let vopt = optimal_velocity_ttc(ttc, &p).map_err(|e| e.to_string())?;
            let a = safety_ovm_acceleration(ttc, 30.0, &p, p.tau_seconds(TauUnit::Steps, 0.1), &f, &b)
                .map_err(|e| e.to_string())?;
            worst = worst
                .max((vopt - row[0].as_f64().unwrap()).abs())
                .max((a - row[1].as_f64().unwrap()).abs());
        }
    }
    let took = start.elapsed();
    check(
        worst <= 1e-9 && took < Duration::from_secs(1),
        format!("400 points, max error {worst:.2e}, {}", secs(took)),
    )
}

fn boundary_properties() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let params = (0.05f64..20.0, 0.0f64..5.0, 0.5f64..50.0, 1.0f64..120.0, 0.0f64..=1.0)
        .prop_map(|(delta_s, beta, tau, v_o, alpha)| CfParams { delta_s, beta, tau, v_o, alpha });
    let result = runner.run(
        &(params, 0.0f64..200.0, 0.0f64..20.0, 0.0f64..10.0, -10.0f64..10.0),
        |(p, x, dx, v, dv)| {
            let at = |x| optimal_velocity_ttc(x, &p).unwrap();
            prop_assert!(at(0.0).abs() <= 1e-12);
            prop_assert!(at(x + dx) >= at(x));
            prop_assert!(at(x) >= 0.0 && at(x) <= p.v_o);
            prop_assert!((at(1e6) - p.v_o).abs() <= 1e-9 * p.v_o);
            let rel = LeaderRelation { gap: x, delta_v: dv, same_lane: true };
            let want = if v >= 5.0 && dv > 0.0 { ModelChoice::SafetyOvm } else { ModelChoice::Default };
            prop_assert_eq!(select_model(v, Some(&rel)), want);
            Ok(())
        },
    );
    let took = start.elapsed();
    let edge = {
        let rel = LeaderRelation { gap: 10.0, delta_v: 1.0, same_lane: true };
        select_model(5.0, Some(&rel)) == ModelChoice::SafetyOvm
            && select_model(5.0f64.next_down(), Some(&rel)) == ModelChoice::Default
    };
    match result {
        Ok(()) => check(edge && took < Duration::from_secs(5), format!("10000 cases, {}", secs(took))),
        Err(e) => Err(e.to_string()),
    }
}

struct Contrast {
    base: Vec<RunLog>,
    ovm: Vec<RunLog>,
    slowest_run: Duration,
}

fn default_setup(model: DriverModel) -> SimSetup {
    let cfg = ScenarioConfig::default();
    let mut s = cfg.resolve(&cfg.spec()).unwrap();
    s.driver_model = model;
    s
}

fn contrast_runs() -> Contrast {
    let cfg = ScenarioConfig::default();
    let spec = cfg.spec();
    let mut slowest = Duration::ZERO;
    let mut runs = |model| -> Vec<RunLog> {
        let setup = default_setup(model);
        (0..5)
            .map(|k| {
                let t = Instant::now();
                let log = run(&setup, spec.replication_seed(k), RunOptions::default());
                slowest = slowest.max(t.elapsed());
                log
            })
            .collect()
    };
    let base = runs(DriverModel::Baseline);
    let ovm = runs(DriverModel::SafetyOvm);
    Contrast { base, ovm, slowest_run: slowest }
}

fn severe_fraction(log: &RunLog) -> f64 {
    let s = ScenarioConfig::default().safety;
    sovm_core::safety::run_safety(&log.conflicts, log.total_vehicles(), s.episode_gap_s, s.critical_ttc_s, s.severe_ttc_s)
        .vehicle_fraction_1_0
}

fn baseline_contrast(c: &Contrast) -> Outcome {
    let pairs: Vec<(f64, f64)> = c.base.iter().zip(&c.ovm).map(|(b, o)| (severe_fraction(b), severe_fraction(o))).collect();
    let ok = pairs.iter().all(|&(b, o)| o >= 3.0 * b && o > b);
    let shown: Vec<String> = pairs
        .iter()
        .map(|(b, o)| format!("{:.2}%/{:.2}%", 100.0 * b, 100.0 * o))
        .collect();
    check(ok, format!("baseline/ovm vehicles with ttc<=1s per seed: {}", shown.join(" ")))
}

fn beyond_share(logs: &[RunLog]) -> (f64, usize) {
    let recs: Vec<&ConflictRecord> = logs.iter().flat_map(|l| &l.conflicts).collect();
    let beyond = recs.iter().filter(|r| r.beyond_stop_bar).count();
    (if recs.is_empty() { 0.0 } else { beyond as f64 / recs.len() as f64 }, recs.len())
}

fn spatial_pattern(c: &Contrast) -> Outcome {
    let (ovm, n_ovm) = beyond_share(&c.ovm);
    let (base, n_base) = beyond_share(&c.base);
    check(
        ovm >= 0.10 && 1.0 - base >= 0.80,
        format!(
            "ovm beyond stop bar {:.1}% of {n_ovm}, baseline upstream {:.1}% of {n_base}",
            100.0 * ovm,
            100.0 * (1.0 - base)
        ),
    )
}

fn mean_ce(summary: &Summary, label: &str) -> f64 {
    summary.scenario(label).expect(label).aggregate.critical_episodes_1_5.mean
}

fn intervention(summary: &Summary) -> Outcome {
    let cur = mean_ce(summary, "V_S:current");
    let split = mean_ce(summary, "V_S:split-phasing");
    let reduction = if cur > 0.0 { (cur - split) / cur } else { 0.0 };
    let double: Vec<(&str, f64)> = ["current", "half-cycle", "split-phasing"]
        .iter()
        .map(|p| (*p, mean_ce(summary, &format!("2V_S:{p}"))))
        .collect();
    let split_2v = double[2].1;
    let best_other = double[..2].iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let ok = cur > split && (0.10..=0.40).contains(&reduction) && split_2v > best_other;
    check(
        ok,
        format!(
            "V_S current {cur:.1} split {split:.1} ({:+.1}%); 2V_S current {:.1} half-cycle {:.1} split {:.1}",
            -100.0 * reduction,
            double[0].1,
            double[1].1,
            double[2].1
        ),
    )
}

fn calibration_recovery() -> Outcome {
    let start = Instant::now();
    let truth = CfParams::BLACKSBURG_THROUGH;
    let f = ObservedAccelTable {
        bin_width: 0.5,
        max_ttc: 10.0,
        bins: (0..20).map(|k| (-3.0 * (-(k as f64 * 0.5 + 0.25) / 2.0).exp(), 10)).collect(),
    };
    let opts = CalibrationOptions::default();
    let tau = truth.tau_seconds(opts.tau_unit, opts.dt);
    let eps: Vec<ObservedEpisode> = (0..60u64)
        .map(|k| ObservedEpisode {
            follower_id: k,
            leader_id: 1000 + k,
            movement: MovementClass::Through,
            samples: (0..40)
                .map(|j| {
                    let ttc = 0.1 + 0.25 * j as f64 + 0.003 * k as f64;
                    let v = 20.0 + (k * 13 % 45) as f64 * 0.9;
                    ObservedSample {
                        t: j as f64 * 0.1,
                        ttc,
                        v_kmh: v,
                        accel: safety_ovm_acceleration(ttc, v, &truth, tau, &f, &opts.bounds).unwrap(),
                    }
                })
                .collect(),
        })
        .collect();
    let init = CfParams::from_array(PARAM_BOUNDS.map(|(lo, hi)| 0.5 * (lo + hi)));
    let r = calibrate(&eps, MovementClass::Through, init, &f, &opts).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let tol = [0.10, 0.20, 0.20, 0.10, 0.20];
    let (got, want) = (r.params.to_array(), truth.to_array());
    let errs: Vec<f64> = (0..5).map(|k| (got[k] - want[k]).abs() / want[k]).collect();
    let ok = (0..5).all(|k| errs[k] <= tol[k]) && r.rmse < 1e-3 && took < Duration::from_secs(120);
    let shown: Vec<String> = (0..5).map(|k| format!("{} {:.4}", PARAM_NAMES[k], got[k])).collect();
    check(ok, format!("{}; rmse {:.1e}, {}", shown.join(", "), r.rmse, secs(took)))
}

fn determinism() -> Outcome {
    let cfg = ScenarioConfig::default();
    let spec = cfg.spec();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for d in &dirs {
        let out = d.path().join("out");
        run_cells(&cfg, &[spec], &out, MatrixOptions::default()).map_err(|e| e.to_string())?;
        let mut files = vec![fs::read(out.join("summary.json")).map_err(|e| e.to_string())?];
        for k in 0..spec.replications {
            files.push(fs::read(rep_dir(&out, &spec, k).join("conflicts.csv")).map_err(|e| e.to_string())?);
        }
        outputs.push(files);
    }
    let setup = cfg.resolve(&spec).unwrap();
    let again = conflicts_csv(&run(&setup, spec.replication_seed(0), RunOptions::default()).conflicts);
    let same = outputs[0] == outputs[1] && again.as_bytes() == outputs[0][1].as_slice();
    check(
        same,
        format!("summary.json and {} conflicts.csv identical across runs", spec.replications),
    )
}

fn round_trip() -> Outcome {
    let setup = default_setup(DriverModel::SafetyOvm);
    let log = run(&setup, 1, RunOptions { trajectories: true, car_following: true });
    let mut csv = Vec::new();
    write_trajectories(&mut csv, &log.trajectories).map_err(|e| e.to_string())?;
    drop(log.trajectories);
    let points = load_trajectories(csv.as_slice()).map_err(|e| e.to_string())?;
    drop(csv);
    let extracted = extract_episodes(&points, setup.vehicle_length_m);
    let logged = cf_episodes(&log.car_following);
    let mut worst = 0.0f64;
    let mut mismatch = extracted.len() != logged.len();
    for (x, l) in extracted.iter().zip(&logged) {
        let steps: Vec<u64> = x.samples.iter().map(|s| (s.t / setup.dt).round() as u64).collect();
        mismatch |= (x.follower_id, x.leader_id) != (l.follower_id, l.leader_id) || steps != l.steps;
        for (s, &t) in x.samples.iter().zip(&l.ttc) {
            worst = worst.max((s.ttc - t).abs() / t.max(1.0));
        }
    }
    check(
        !mismatch && worst <= 1e-9,
        format!(
            "{} episodes, {} samples, ttc max rel diff {worst:.1e}",
            logged.len(),
            log.car_following.len()
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, o: Outcome| {
        match o {
            Ok(d) => println!("criterion {n} {name} ... PASS ({d})"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} {name} ... FAIL ({d})");
            }
        }
    };
    report(1, "kernel exactness", kernel_exactness());
    report(2, "boundary properties", boundary_properties());
    let contrast = contrast_runs();
    report(3, "baseline vs safety-ovm contrast", baseline_contrast(&contrast));
    report(4, "spatial pattern", spatial_pattern(&contrast));

    let cfg = ScenarioConfig::default();
    let specs = cfg.matrix_specs();
    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let matrix = run_cells(&cfg, &specs, &tmp.path().join("matrix"), MatrixOptions::default());
    let matrix_time = t.elapsed();
    match &matrix {
        Ok(summary) => report(5, "intervention effect", intervention(summary)),
        Err(e) => report(5, "intervention effect", Err(e.to_string())),
    }
    report(6, "calibration recovery", calibration_recovery());
    report(7, "determinism", determinism());
    report(8, "round trip", round_trip());
    report(
        9,
        "performance",
        check(
            contrast.slowest_run < Duration::from_secs(10)
                && matrix.is_ok()
                && matrix_time < Duration::from_secs(15 * 60),
            format!(
                "slowest single run {}, {} cells x {} replications in {} with 4 workers",
                secs(contrast.slowest_run),
                specs.len(),
                cfg.replications,
                secs(matrix_time)
            ),
        ),
    );
    drop(report);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
