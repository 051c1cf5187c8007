use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optimize::nelder_mead;
use super::{bin_occupancy, CalibrationError, ObservedEpisode};
use crate::kernel::{
    safety_ovm_acceleration, AccelBounds, CfParams, MovementClass, ObservedAccelTable, TauUnit,
};

pub const PARAM_NAMES: [&str; 5] = ["delta_s", "beta", "tau", "v_o", "alpha"];

/// Search box per parameter, in [`PARAM_NAMES`] order.
pub const PARAM_BOUNDS: [(f64, f64); 5] = [(0.5, 20.0), (0.0, 5.0), (1.0, 50.0), (10.0, 90.0), (0.0, 1.0)];

const MIN_BUDGET: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSample {
    pub ttc: f64,
    pub v_kmh: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Total objective evaluations, shared evenly by the restarts.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Half-width of the uniform jitter applied to restart starts, as a share of each box side.
    pub jitter: f64,
    pub tau_unit: TauUnit,
    pub dt: f64,
    pub bounds: AccelBounds,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            budget: 20_000,
            restarts: 5,
            seed: 7,
            jitter: 0.25,
            tau_unit: TauUnit::Steps,
            dt: 0.1,
            bounds: AccelBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMethod {
    pub objective: String,
    pub optimizer: String,
    /// The objective and optimizer are reconstructions, not a published procedure.
    pub reconstructed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub start: CfParams,
    pub params: CfParams,
    pub rmse: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub movement: MovementClass,
    pub params: CfParams,
    pub rmse: f64,
    pub init: CfParams,
    pub initial_rmse: f64,
    pub episodes: usize,
    pub samples: usize,
    pub evaluations: usize,
    pub bin_occupancy: Vec<u64>,
    pub tau_unit: TauUnit,
    pub dt: f64,
    pub restarts: Vec<RestartReport>,
    pub method: FitMethod,
}

fn to_unit(p: &CfParams) -> Vec<f64> {
    p.to_array()
        .iter()
        .zip(PARAM_BOUNDS)
        .map(|(v, (lo, hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect()
}

fn from_unit(u: &[f64]) -> CfParams {
    let mut a = [0.0; 5];
    for (k, (lo, hi)) in PARAM_BOUNDS.into_iter().enumerate() {
        a[k] = lo + u[k].clamp(0.0, 1.0) * (hi - lo);
    }
    CfParams::from_array(a)
}

/// Samples sorted into a canonical order, so sums do not depend on input order.
fn canonical(mut samples: Vec<FitSample>) -> Vec<FitSample> {
    samples.sort_by(|a, b| {
        a.ttc
            .total_cmp(&b.ttc)
            .then(a.v_kmh.total_cmp(&b.v_kmh))
            .then(a.accel.total_cmp(&b.accel))
    });
    samples
}

/// Root-mean-square error of predicted versus observed acceleration.
/// Degenerate parameters give +∞.
pub fn objective_rmse(
    p: &CfParams,
    samples: &[FitSample],
    f: &ObservedAccelTable,
    opts: &CalibrationOptions,
) -> f64 {
    if samples.is_empty() || p.validate().is_err() {
        return f64::INFINITY;
    }
    let tau = p.tau_seconds(opts.tau_unit, opts.dt);
    let mut sse = 0.0;
    for s in samples {
        match safety_ovm_acceleration(s.ttc, s.v_kmh, p, tau, f, &opts.bounds) {
            Ok(a) => sse += (a - s.accel).powi(2),
            Err(_) => return f64::INFINITY,
        }
    }
    let r = (sse / samples.len() as f64).sqrt();
    if r.is_finite() {
        r
    } else {
        f64::INFINITY
    }
}

fn lexi(a: &CfParams, b: &CfParams) -> std::cmp::Ordering {
    a.to_array()
        .iter()
        .zip(b.to_array().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Fits the safety-OVM parameters of one movement class.
///
/// Minimizes acceleration RMSE over every sample of the class's episodes,
/// using `f` as the observed-acceleration table. Restart 0 starts at `init`,
/// the others at jittered copies of it; each runs box-projected Nelder–Mead,
/// re-seeding its simplex around the incumbent until its share of the budget
/// is spent. The winner is the lowest RMSE, ties broken by parameter order,
/// and is never worse than `init` itself.
pub fn calibrate(
    episodes: &[ObservedEpisode],
    movement: MovementClass,
    init: CfParams,
    f: &ObservedAccelTable,
    opts: &CalibrationOptions,
) -> Result<FitReport, CalibrationError> {
    if opts.budget < MIN_BUDGET {
        return Err(CalibrationError::Budget {
            min: MIN_BUDGET,
            got: opts.budget,
        });
    }
    let chosen: Vec<&ObservedEpisode> = episodes.iter().filter(|e| e.movement == movement).collect();
    let samples = canonical(
        chosen
            .iter()
            .flat_map(|e| &e.samples)
            .map(|s| FitSample {
                ttc: s.ttc,
                v_kmh: s.v_kmh,
                accel: s.accel,
            })
            .collect(),
    );
    if samples.is_empty() {
        return Err(CalibrationError::NoEpisodes);
    }

    let restarts = opts.restarts.max(1);
    let per_restart = (opts.budget / restarts).max(2 * PARAM_NAMES.len() + 2);
    let u0 = to_unit(&init);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vec<f64>> = (0..restarts)
        .map(|k| {
            if k == 0 {
                u0.clone()
            } else {
                u0.iter()
                    .map(|&u| (u + rng.random_range(-opts.jitter..=opts.jitter)).clamp(0.0, 1.0))
                    .collect()
            }
        })
        .collect();

    let objective = |u: &[f64]| objective_rmse(&from_unit(u), &samples, f, opts);
    let runs: Vec<RestartReport> = starts
        .par_iter()
        .map(|start| {
            let mut x = start.clone();
            let mut fx = objective(&x);
            let mut used = 1;
            let mut step = 0.15;
            while used + PARAM_NAMES.len() + 2 <= per_restart {
                let r = nelder_mead(objective, &x, step, per_restart - used, 1e-13);
                used += r.evaluations;
                let improved = r.fx < fx;
                if r.fx <= fx {
                    x = r.x;
                    fx = r.fx;
                }
                if !improved {
                    if step < 1e-4 {
                        break;
                    }
                    step *= 0.25;
                }
            }
            RestartReport {
                start: from_unit(start),
                params: from_unit(&x),
                rmse: fx,
                evaluations: used,
            }
        })
        .collect();

    let initial_rmse = objective_rmse(&init, &samples, f, opts);
    let best = runs
        .iter()
        .min_by(|a, b| a.rmse.total_cmp(&b.rmse).then_with(|| lexi(&a.params, &b.params)))
        .expect("at least one restart");
    let (params, rmse) = if best.rmse <= initial_rmse || !initial_rmse.is_finite() {
        (best.params, best.rmse)
    } else {
        (init, initial_rmse)
    };
    Ok(FitReport {
        movement,
        params,
        rmse,
        init,
        initial_rmse,
        episodes: chosen.len(),
        samples: samples.len(),
        evaluations: runs.iter().map(|r| r.evaluations).sum(),
        bin_occupancy: bin_occupancy(f),
        tau_unit: opts.tau_unit,
        dt: opts.dt,
        restarts: runs,
        method: FitMethod {
            objective: "per-sample acceleration RMSE".into(),
            optimizer: "box-projected Nelder-Mead with jittered restarts".into(),
            reconstructed: true,
        },
    })
}
