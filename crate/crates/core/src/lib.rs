//! Signalized-intersection microsimulation with a TTC-driven optimal velocity
//! car-following model, surrogate safety analysis and parameter calibration.

pub mod calibration;
pub mod config;
pub mod engine;
pub mod kernel;
pub mod network;
pub mod safety;
pub mod scenario;
pub mod signal;
