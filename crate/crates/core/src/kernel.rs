//! Car-following mathematics.
//!
//! Everything here is a pure function of its arguments. Speeds that enter the
//! optimal velocity functions are km/hr (the unit the parameter sets are
//! calibrated in); accelerations leave in m/s².

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// km/hr per m/s.
pub const KMH_PER_MPS: f64 = 3.6;

/// Speed floor below which the default model always drives.
pub const CAR_FOLLOWING_MIN_SPEED: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("stimulus must be non-negative, got {0}")]
    NegativeStimulus(f64),
    #[error("adaptation time must be positive, got {0} s")]
    NonPositiveTau(f64),
    #[error("invalid parameter {name}: {value} ({reason})")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

pub type KernelResult<T> = Result<T, KernelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovementClass {
    Through,
    Turning,
}

impl MovementClass {
    pub fn as_str(self) -> &'static str {
        match self {
            MovementClass::Through => "through",
            MovementClass::Turning => "turning",
        }
    }
}

impl std::str::FromStr for MovementClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "through" => Ok(MovementClass::Through),
            "turning" => Ok(MovementClass::Turning),
            other => Err(format!("unknown movement class '{other}'")),
        }
    }
}

impl std::fmt::Display for MovementClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the `tau` field of [`CfParams`] is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauUnit {
    /// Simulation timesteps; seconds = tau × dt.
    #[default]
    Steps,
    Seconds,
}

/// The five safety-OVM parameters for one movement class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfParams {
    /// Transition width: seconds for the TTC model, meters for the gap model.
    pub delta_s: f64,
    /// Form factor.
    pub beta: f64,
    /// Adaptation time, see [`TauUnit`].
    pub tau: f64,
    /// Desired speed, km/hr.
    pub v_o: f64,
    /// Weight of the observed-acceleration term.
    pub alpha: f64,
}

impl CfParams {
    /// Calibrated through-movement set shipped with the `blacksburg-pm` profile.
    pub const BLACKSBURG_THROUGH: CfParams = CfParams {
        delta_s: 4.63,
        beta: 1.10,
        tau: 6.11,
        v_o: 38.20,
        alpha: 0.18,
    };

    /// Calibrated turning-movement set shipped with the `blacksburg-pm` profile.
    pub const BLACKSBURG_TURNING: CfParams = CfParams {
        delta_s: 4.76,
        beta: 0.10,
        tau: 5.83,
        v_o: 31.95,
        alpha: 0.01,
    };

    pub fn validate(&self) -> KernelResult<()> {
        let checks: [(&'static str, f64, bool, &'static str); 5] = [
            ("delta_s", self.delta_s, self.delta_s > 0.0, "must be > 0"),
            ("beta", self.beta, self.beta.is_finite(), "must be finite"),
            ("tau", self.tau, self.tau > 0.0, "must be > 0"),
            ("v_o", self.v_o, self.v_o > 0.0, "must be > 0"),
            (
                "alpha",
                self.alpha,
                (0.0..=1.0).contains(&self.alpha),
                "must lie in [0, 1]",
            ),
        ];
        for (name, value, ok, reason) in checks {
            if !ok || !value.is_finite() {
                return Err(KernelError::InvalidParam {
                    name,
                    value,
                    reason,
                });
            }
        }
        Ok(())
    }

    /// Adaptation time in seconds.
    pub fn tau_seconds(&self, unit: TauUnit, dt: f64) -> f64 {
        match unit {
            TauUnit::Steps => self.tau * dt,
            TauUnit::Seconds => self.tau,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.delta_s, self.beta, self.tau, self.v_o, self.alpha]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        CfParams {
            delta_s: a[0],
            beta: a[1],
            tau: a[2],
            v_o: a[3],
            alpha: a[4],
        }
    }
}

/// Acceleration bounds applied to every model output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for AccelBounds {
    fn default() -> Self {
        AccelBounds { min: -8.0, max: 3.5 }
    }
}

impl AccelBounds {
    pub fn clamp(&self, a: f64) -> f64 {
        a.clamp(self.min, self.max)
    }
}

/// Mean observed follower acceleration per TTC bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedAccelTable {
    pub bin_width: f64,
    pub max_ttc: f64,
    /// `(mean m/s², sample count)` per bin, bin `k` covering `[k·w, (k+1)·w)`.
    pub bins: Vec<(f64, u64)>,
}

impl ObservedAccelTable {
    /// A table that contributes nothing (f ≡ 0).
    pub fn empty() -> Self {
        ObservedAccelTable {
            bin_width: 0.5,
            max_ttc: 10.0,
            bins: Vec::new(),
        }
    }

    pub fn bin_count(bin_width: f64, max_ttc: f64) -> usize {
        ((max_ttc / bin_width).ceil() as usize).max(1)
    }

    /// Bin index for `ttc`, or `None` outside `[0, max_ttc]`.
    pub fn bin_index(&self, ttc: f64) -> Option<usize> {
        if !(ttc >= 0.0 && ttc <= self.max_ttc) || self.bin_width <= 0.0 {
            return None;
        }
        let n = Self::bin_count(self.bin_width, self.max_ttc);
        Some(((ttc / self.bin_width).floor() as usize).min(n - 1))
    }

    pub fn lookup(&self, ttc: f64) -> f64 {
        match self.bin_index(ttc).and_then(|k| self.bins.get(k)) {
            Some(&(mean, count)) if count > 0 => mean,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelChoice {
    Default,
    SafetyOvm,
}

/// Follower's view of the vehicle (or stop line) ahead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderRelation {
    /// Follower front bumper to leader rear bumper, m.
    pub gap: f64,
    /// Follower speed minus leader speed, m/s.
    pub delta_v: f64,
    pub same_lane: bool,
}

/// Instantaneous time-to-collision; `None` unless the gap is closing.
pub fn instantaneous_ttc(rel: &LeaderRelation) -> Option<f64> {
    if rel.delta_v > 0.0 {
        Some(rel.gap / rel.delta_v)
    } else {
        None
    }
}

fn shifted_tanh(x: f64, p: &CfParams) -> f64 {
    let tb = p.beta.tanh();
    (p.v_o * ((x / p.delta_s - p.beta).tanh() + tb) / (1.0 + tb)).clamp(0.0, p.v_o)
}

/// Optimal velocity (km/hr) for a distance gap in meters.
pub fn optimal_velocity_distance(s: f64, p: &CfParams) -> KernelResult<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(KernelError::NegativeStimulus(s));
    }
    Ok(shifted_tanh(s, p))
}

/// Optimal velocity (km/hr) for an instantaneous TTC in seconds.
pub fn optimal_velocity_ttc(ttc: f64, p: &CfParams) -> KernelResult<f64> {
    if ttc.is_nan() || ttc < 0.0 {
        return Err(KernelError::NegativeStimulus(ttc));
    }
    Ok(shifted_tanh(ttc, p))
}

/// Relaxation toward `v_opt`; speeds in km/hr, result in m/s² (unclamped).
pub fn ovm_acceleration(v_opt: f64, v: f64, tau_sec: f64) -> KernelResult<f64> {
    if !(tau_sec > 0.0) {
        return Err(KernelError::NonPositiveTau(tau_sec));
    }
    Ok((v_opt - v) / KMH_PER_MPS / tau_sec)
}

/// Blend of OVM relaxation and the observed-acceleration lookup, before clamping.
pub fn safety_ovm_acceleration_raw(
    ttc: f64,
    v: f64,
    p: &CfParams,
    tau_sec: f64,
    f: &ObservedAccelTable,
) -> KernelResult<f64> {
    let relax = ovm_acceleration(optimal_velocity_ttc(ttc, p)?, v, tau_sec)?;
    Ok((1.0 - p.alpha) * relax + p.alpha * f.lookup(ttc))
}

/// Safety-based OVM acceleration in m/s², clamped to `bounds`.
///
/// `v` is the follower speed in km/hr and `tau_sec` the adaptation time
/// already converted to seconds.
pub fn safety_ovm_acceleration(
    ttc: f64,
    v: f64,
    p: &CfParams,
    tau_sec: f64,
    f: &ObservedAccelTable,
    bounds: &AccelBounds,
) -> KernelResult<f64> {
    safety_ovm_acceleration_raw(ttc, v, p, tau_sec, f).map(|a| bounds.clamp(a))
}

/// Chooses which model drives a vehicle this step. `v` is in m/s.
///
/// The safety OVM is used only at or above [`CAR_FOLLOWING_MIN_SPEED`] while
/// closing on a leader in the same lane.
pub fn select_model(v: f64, rel: Option<&LeaderRelation>) -> ModelChoice {
    if v < CAR_FOLLOWING_MIN_SPEED {
        return ModelChoice::Default;
    }
    match rel {
        Some(r) if r.same_lane && r.delta_v > 0.0 => ModelChoice::SafetyOvm,
        _ => ModelChoice::Default,
    }
}

/// Parameters of the Wiedemann-74-style baseline.
///
/// This is a stand-in for a proprietary default model built on the public
/// W74 following distance `d = ax + (bx_add + bx_mult·z)·√v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WiedemannParams {
    /// Standstill distance, m.
    pub ax: f64,
    pub bx_add: f64,
    pub bx_mult: f64,
    /// Upper following-distance multiplier (SDX = ax + ex·bx).
    pub ex: f64,
    /// Speed-difference perception constant (SDV = ((dx − ax)/cx)²).
    pub cx: f64,
    /// Maximum free-flow acceleration, m/s².
    pub free_accel: f64,
    /// Exponent of the free-flow speed ratio.
    pub free_exponent: f64,
    /// Gain on the distance error while following, 1/s².
    pub follow_gain_gap: f64,
    /// Gain on the speed difference while following, 1/s.
    pub follow_gain_dv: f64,
    /// Deceleration applied per unit relative distance deficit, m/s².
    pub close_decel: f64,
}

impl Default for WiedemannParams {
    fn default() -> Self {
        WiedemannParams {
            ax: 2.0,
            bx_add: 2.0,
            bx_mult: 3.0,
            ex: 2.0,
            cx: 40.0,
            free_accel: 2.5,
            free_exponent: 4.0,
            follow_gain_gap: 0.1,
            follow_gain_dv: 0.5,
            close_decel: 3.0,
        }
    }
}

impl WiedemannParams {
    /// Desired following distance at speed `v` (m/s) for driver factor `z`.
    pub fn following_distance(&self, v: f64, z: f64) -> f64 {
        self.ax + (self.bx_add + self.bx_mult * z) * v.max(0.0).sqrt()
    }
}

/// Baseline acceleration in m/s², clamped to `bounds`. Speeds in m/s.
pub fn wiedemann74_acceleration(
    v: f64,
    desired_v: f64,
    rel: Option<&LeaderRelation>,
    driver_factor: f64,
    w: &WiedemannParams,
    bounds: &AccelBounds,
) -> f64 {
    let ratio = if desired_v > 0.0 { v / desired_v } else { 1.0 };
    let free = w.free_accel * (1.0 - ratio.max(0.0).powf(w.free_exponent));
    let Some(rel) = rel else {
        return bounds.clamp(free);
    };
    let dx = rel.gap;
    let dv = rel.delta_v;
    let bx = (w.bx_add + w.bx_mult * driver_factor) * v.max(0.0).sqrt();
    let abx = w.ax + bx;
    let sdx = w.ax + w.ex * bx;

    let a = if dx < abx {
        // closer than the desired distance: brake off the deficit and any closing speed
        let closing = dv.max(0.0);
        let kinematic = closing * closing / (2.0 * (dx - w.ax).max(0.5));
        let deficit = w.close_decel * (abx - dx) / abx.max(1e-9);
        free.min(-kinematic - deficit)
    } else if dv > 0.0 && dv > ((dx - w.ax) / w.cx).powi(2) {
        // approaching: match the leader speed by the time the gap reaches abx
        let approach = -dv * dv / (2.0 * (dx - abx).max(0.5));
        free.min(approach)
    } else if dx <= sdx {
        let follow = w.follow_gain_gap * (dx - abx) - w.follow_gain_dv * dv;
        free.min(follow)
    } else {
        free
    };
    bounds.clamp(a)
}
