//! Trajectory ingestion, car-following episode extraction, the observed
//! acceleration table and parameter fitting.

mod episodes;
mod fit;
mod ftable;
mod optimize;
mod trajectory;

use thiserror::Error;

pub use episodes::{extract_episodes, ObservedEpisode, ObservedSample};
pub use fit::{
    calibrate, objective_rmse, CalibrationOptions, FitMethod, FitReport, FitSample, PARAM_BOUNDS,
    PARAM_NAMES,
};
pub use ftable::{bin_occupancy, build_f_table, DEFAULT_BIN_WIDTH, DEFAULT_MAX_TTC};
pub use optimize::{nelder_mead, NelderMeadResult};
pub use trajectory::{load_trajectories, write_trajectories, TrajectoryPoint, TRAJECTORY_HEADER};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("header must be '{expected}', found '{found}'")]
    Header { expected: String, found: String },
    #[error("line {line}: duplicate row for vehicle {vehicle} at t={t}")]
    Duplicate { line: u64, vehicle: u64, t: f64 },
    #[error("line {line}: vehicle {vehicle} time {t} is not after the previous {prev}")]
    NonMonotonic {
        line: u64,
        vehicle: u64,
        t: f64,
        prev: f64,
    },
    #[error("no car-following episodes to work with")]
    NoEpisodes,
    #[error("evaluation budget must be at least {min}, got {got}")]
    Budget { min: usize, got: usize },
    #[error("invalid bins: {0}")]
    Bins(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
