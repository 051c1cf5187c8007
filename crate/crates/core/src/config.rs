//! Scenario configuration file and its resolution into a runnable setup.
//!
//! The file is TOML. Every section and key is optional; omitted values take
//! the `blacksburg-pm` defaults (see `data/blacksburg-pm.toml` for the full,
//! commented schema).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::kernel::{AccelBounds, CfParams, KernelError, ObservedAccelTable, TauUnit, WiedemannParams};
use crate::network::{Approach, Movement, Network, NetworkConfig, NetworkError, Turn};
use crate::scenario::{ScenarioSpec, SpeedCap, Volume};
use crate::signal::{build_plan_with_min_green, PlanError, PlanKind, SignalPlan};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown parameter profile '{0}'")]
    UnknownProfile(String),
    #[error("{movement} parameters: {source}")]
    Params {
        movement: &'static str,
        source: KernelError,
    },
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverModel {
    /// Wiedemann-style baseline for every vehicle.
    Baseline,
    /// Safety OVM during car-following, baseline otherwise.
    #[default]
    SafetyOvm,
}

impl std::str::FromStr for DriverModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(DriverModel::Baseline),
            "safety-ovm" => Ok(DriverModel::SafetyOvm),
            other => Err(format!("unknown driver model '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub warmup_s: f64,
    pub horizon_s: f64,
    pub dt_s: f64,
    pub driver_model: DriverModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            warmup_s: 900.0,
            horizon_s: 3600.0,
            dt_s: 0.1,
            driver_model: DriverModel::SafetyOvm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub volume: Volume,
    pub speed: SpeedCap,
    pub plan: PlanKind,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            volume: Volume::Observed,
            speed: SpeedCap::Observed,
            plan: PlanKind::Current,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub profile: String,
    pub tau_unit: TauUnit,
    pub accel_min: f64,
    pub accel_max: f64,
    /// Bumper gap below which the emergency brake overrides the model.
    pub emergency_gap_m: f64,
    pub through: Option<CfParams>,
    pub turning: Option<CfParams>,
    pub ftable_through: Option<PathBuf>,
    pub ftable_turning: Option<PathBuf>,
    pub vehicle_length_m: f64,
    pub merge_headway_s: f64,
    pub merge_min_gap_m: f64,
    /// Required stopping deceleration above which a vehicle clears a yellow.
    pub yellow_stop_decel: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            profile: "blacksburg-pm".into(),
            tau_unit: TauUnit::Steps,
            accel_min: -8.0,
            accel_max: 3.5,
            emergency_gap_m: 2.0,
            through: None,
            turning: None,
            ftable_through: None,
            ftable_turning: None,
            vehicle_length_m: 4.5,
            merge_headway_s: 1.5,
            merge_min_gap_m: 2.0,
            yellow_stop_decel: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverConfig {
    pub wiedemann: WiedemannParams,
    pub factor_mean: f64,
    pub factor_sd: f64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            wiedemann: WiedemannParams::default(),
            factor_mean: 0.5,
            factor_sd: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    /// Plan file, relative to the scenario file. The shipped plan is used when absent.
    pub plan_file: Option<PathBuf>,
    pub min_green_s: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            plan_file: None,
            min_green_s: crate::signal::MIN_GREEN_S,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurnFlows {
    pub left: f64,
    pub through: f64,
    pub right: f64,
}

impl Default for TurnFlows {
    fn default() -> Self {
        TurnFlows {
            left: 0.0,
            through: 0.0,
            right: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowMap {
    pub eb: TurnFlows,
    pub wb: TurnFlows,
    pub nb: TurnFlows,
    pub sb: TurnFlows,
}

impl FlowMap {
    pub fn get(&self, m: Movement) -> f64 {
        let f = match m.approach {
            Approach::Eb => &self.eb,
            Approach::Wb => &self.wb,
            Approach::Nb => &self.nb,
            Approach::Sb => &self.sb,
        };
        match m.turn {
            Turn::Left => f.left,
            Turn::Through => f.through,
            Turn::Right => f.right,
        }
    }

    pub fn total(&self) -> f64 {
        Movement::all().map(|m| self.get(m)).sum()
    }
}

impl Default for FlowMap {
    /// Placeholder PM-peak turning counts totalling 2667 veh/hr.
    fn default() -> Self {
        FlowMap {
            eb: TurnFlows {
                left: 120.0,
                through: 700.0,
                right: 100.0,
            },
            wb: TurnFlows {
                left: 110.0,
                through: 650.0,
                right: 90.0,
            },
            nb: TurnFlows {
                left: 90.0,
                through: 250.0,
                right: 120.0,
            },
            sb: TurnFlows {
                left: 100.0,
                through: 240.0,
                right: 97.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandConfig {
    pub speed_p80_kmh: f64,
    pub speed_p95_kmh: f64,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    /// Minimum entry headway for a new vehicle behind the last one in its lane.
    pub entry_headway_s: f64,
    pub entry_min_gap_m: f64,
    pub flows: FlowMap,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig {
            speed_p80_kmh: 55.0,
            speed_p95_kmh: 75.0,
            speed_min_kmh: 10.0,
            speed_max_kmh: 90.0,
            entry_headway_s: 1.5,
            entry_min_gap_m: 5.0,
            flows: FlowMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    /// TTC at or below which an instant is logged as a conflict.
    pub record_ttc_s: f64,
    pub critical_ttc_s: f64,
    pub severe_ttc_s: f64,
    pub episode_gap_s: f64,
    pub heatmap_cell_m: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            record_ttc_s: 3.0,
            critical_ttc_s: 1.5,
            severe_ttc_s: 1.0,
            episode_gap_s: 1.0,
            heatmap_cell_m: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub volumes: Vec<Volume>,
    pub speeds: Vec<SpeedCap>,
    pub plans: Vec<PlanKind>,
    pub workers: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            volumes: Volume::ALL.to_vec(),
            speeds: SpeedCap::ALL.to_vec(),
            plans: PlanKind::ALL.to_vec(),
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub replications: u32,
    pub run: RunConfig,
    pub scenario: CellConfig,
    pub model: ModelConfig,
    pub driver: DriverConfig,
    pub signal: SignalConfig,
    pub network: NetworkConfig,
    pub demand: DemandConfig,
    pub safety: SafetyConfig,
    pub matrix: MatrixConfig,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "blacksburg-pm".into(),
            seed: 1,
            replications: 5,
            run: RunConfig::default(),
            scenario: CellConfig::default(),
            model: ModelConfig::default(),
            driver: DriverConfig::default(),
            signal: SignalConfig::default(),
            network: NetworkConfig::default(),
            demand: DemandConfig::default(),
            safety: SafetyConfig::default(),
            matrix: MatrixConfig::default(),
            base_dir: None,
        }
    }
}

/// Lognormal desired-speed distribution (km/hr) fitted to two percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedDistribution {
    pub mu: f64,
    pub sigma: f64,
    pub min_kmh: f64,
    pub max_kmh: f64,
    pub cap_kmh: Option<f64>,
}

impl SpeedDistribution {
    /// Fits `ln v ~ N(mu, sigma²)` so that the 80th and 95th percentiles hit the anchors.
    pub fn fit(p80: f64, p95: f64, min_kmh: f64, max_kmh: f64, cap_kmh: Option<f64>) -> Self {
        let std = Normal::standard();
        let z80 = std.inverse_cdf(0.80);
        let z95 = std.inverse_cdf(0.95);
        let sigma = (p95.ln() - p80.ln()) / (z95 - z80);
        let mu = p80.ln() - z80 * sigma;
        SpeedDistribution {
            mu,
            sigma,
            min_kmh,
            max_kmh,
            cap_kmh,
        }
    }

    /// Untruncated quantile of the fitted distribution.
    pub fn quantile(&self, p: f64) -> f64 {
        (self.mu + self.sigma * Normal::standard().inverse_cdf(p)).exp()
    }
}

/// Demand resolved for one scenario cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    /// veh/hr per movement, indexed like [`Network::movement_index`], multiplier applied.
    pub flows: Vec<(Movement, f64)>,
    pub multiplier: f64,
    pub speed: SpeedDistribution,
    pub entry_headway_s: f64,
    pub entry_min_gap_m: f64,
}

impl DemandSpec {
    pub fn total_flow(&self) -> f64 {
        self.flows.iter().map(|(_, f)| f).sum()
    }

    /// Share of turning vehicles on one approach.
    pub fn turning_share(&self, approach: Approach) -> f64 {
        let on: Vec<&(Movement, f64)> =
            self.flows.iter().filter(|(m, _)| m.approach == approach).collect();
        let total: f64 = on.iter().map(|(_, f)| f).sum();
        if total == 0.0 {
            return 0.0;
        }
        on.iter()
            .filter(|(m, _)| m.turn != Turn::Through)
            .map(|(_, f)| f)
            .sum::<f64>()
            / total
    }
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub name: String,
    pub spec: ScenarioSpec,
    pub dt: f64,
    pub warmup_s: f64,
    pub horizon_s: f64,
    pub driver_model: DriverModel,
    pub network: Network,
    pub plan: SignalPlan,
    pub through: CfParams,
    pub turning: CfParams,
    pub tau_unit: TauUnit,
    pub ftable_through: ObservedAccelTable,
    pub ftable_turning: ObservedAccelTable,
    pub bounds: AccelBounds,
    pub emergency_gap_m: f64,
    pub vehicle_length_m: f64,
    pub merge_headway_s: f64,
    pub merge_min_gap_m: f64,
    pub yellow_stop_decel: f64,
    pub driver: DriverConfig,
    pub demand: DemandSpec,
    pub safety: SafetyConfig,
}

impl SimSetup {
    pub fn params(&self, class: crate::kernel::MovementClass) -> &CfParams {
        match class {
            crate::kernel::MovementClass::Through => &self.through,
            crate::kernel::MovementClass::Turning => &self.turning,
        }
    }

    pub fn ftable(&self, class: crate::kernel::MovementClass) -> &ObservedAccelTable {
        match class {
            crate::kernel::MovementClass::Through => &self.ftable_through,
            crate::kernel::MovementClass::Turning => &self.ftable_turning,
        }
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_s / self.dt).round() as u64
    }

    pub fn measured_steps(&self) -> u64 {
        (self.horizon_s / self.dt).round() as u64
    }
}

/// Built-in parameter profiles.
pub fn profile(name: &str) -> Result<(CfParams, CfParams), ConfigError> {
    match name {
        "blacksburg-pm" => Ok((CfParams::BLACKSBURG_THROUGH, CfParams::BLACKSBURG_TURNING)),
        other => Err(ConfigError::UnknownProfile(other.to_string())),
    }
}

impl ScenarioConfig {
    /// The shipped default scenario.
    pub fn builtin() -> Self {
        Self::from_toml_str(include_str!("../data/blacksburg-pm.toml"), "<builtin>")
            .expect("shipped scenario parses")
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// The single scenario cell named in the `[scenario]` section.
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            volume: self.scenario.volume,
            speed: self.scenario.speed,
            plan: self.scenario.plan,
            seed: self.seed,
            replications: self.replications,
        }
    }

    /// All matrix cells in deterministic order (volume, speed, plan).
    pub fn matrix_specs(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for &volume in &self.matrix.volumes {
            for &speed in &self.matrix.speeds {
                for &plan in &self.matrix.plans {
                    out.push(ScenarioSpec {
                        volume,
                        speed,
                        plan,
                        seed: self.seed,
                        replications: self.replications,
                    });
                }
            }
        }
        out
    }

    pub fn base_plan(&self) -> Result<SignalPlan, ConfigError> {
        match &self.signal.plan_file {
            Some(p) => Ok(SignalPlan::from_file(&self.resolve_path(p))?),
            None => Ok(SignalPlan::blacksburg_pm()),
        }
    }

    fn load_ftable(&self, p: &Option<PathBuf>) -> Result<ObservedAccelTable, ConfigError> {
        let Some(p) = p else {
            return Ok(ObservedAccelTable::empty());
        };
        let path = self.resolve_path(p);
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let table: ObservedAccelTable =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        if !(table.bin_width > 0.0) {
            return Err(invalid("ftable bin_width", "must be positive"));
        }
        Ok(table)
    }

    /// Checks the file-level fields that do not depend on a scenario cell.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.resolve(&self.spec()).map(|_| ())
    }

    /// Resolves the configuration for one scenario cell.
    pub fn resolve(&self, spec: &ScenarioSpec) -> Result<SimSetup, ConfigError> {
        let run = &self.run;
        if !(run.dt_s > 0.0) {
            return Err(invalid("run.dt_s", "must be positive"));
        }
        if !(run.warmup_s >= 0.0) || !(run.horizon_s > 0.0) {
            return Err(invalid("run.warmup_s/horizon_s", "warm-up ≥ 0 and horizon > 0 required"));
        }
        if spec.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        let m = &self.model;
        if !(m.accel_min < 0.0 && m.accel_max > 0.0) {
            return Err(invalid("model.accel_min/accel_max", "need accel_min < 0 < accel_max"));
        }
        for (field, v) in [
            ("model.emergency_gap_m", m.emergency_gap_m),
            ("model.vehicle_length_m", m.vehicle_length_m),
            ("model.merge_headway_s", m.merge_headway_s),
            ("model.yellow_stop_decel", m.yellow_stop_decel),
        ] {
            if !(v > 0.0) {
                return Err(invalid(field, "must be positive"));
            }
        }
        let (mut through, mut turning) = profile(&m.profile)?;
        if let Some(p) = m.through {
            through = p;
        }
        if let Some(p) = m.turning {
            turning = p;
        }
        through.validate().map_err(|source| ConfigError::Params {
            movement: "through",
            source,
        })?;
        turning.validate().map_err(|source| ConfigError::Params {
            movement: "turning",
            source,
        })?;

        let d = &self.driver;
        if !(d.factor_sd >= 0.0) {
            return Err(invalid("driver.factor_sd", "must be non-negative"));
        }

        let network = Network::build(&self.network)?;
        let base = self.base_plan()?;
        let plan = build_plan_with_min_green(spec.plan, &base, self.signal.min_green_s)?;
        for lane in &network.lanes {
            if let Some(p) = lane.phase {
                if !plan.phases.contains_key(&p) {
                    return Err(invalid(
                        "signal.plan_file",
                        format!("plan has no phase {p} for lane {}", lane.name),
                    ));
                }
            }
        }

        let dm = &self.demand;
        if !(dm.speed_p80_kmh > 0.0 && dm.speed_p95_kmh > dm.speed_p80_kmh) {
            return Err(invalid("demand.speed_p80/p95", "percentile anchors must increase"));
        }
        if !(dm.speed_min_kmh > 0.0 && dm.speed_max_kmh > dm.speed_min_kmh) {
            return Err(invalid("demand.speed_min/max", "need 0 < min < max"));
        }
        if !(dm.entry_headway_s >= 0.0 && dm.entry_min_gap_m >= 0.0) {
            return Err(invalid("demand.entry_*", "must be non-negative"));
        }
        let multiplier = spec.volume.multiplier();
        let mut flows = Vec::new();
        for mv in Movement::all() {
            let f = dm.flows.get(mv);
            if !(f >= 0.0 && f.is_finite()) {
                return Err(invalid(
                    format!("demand.flows.{}.{:?}", mv.approach, mv.turn).to_lowercase(),
                    "flow must be non-negative",
                ));
            }
            if f > 0.0 && network.entry_lanes(mv).is_empty() {
                return Err(invalid(
                    format!("demand.flows.{}.{:?}", mv.approach, mv.turn).to_lowercase(),
                    "flow assigned to a movement without a lane",
                ));
            }
            flows.push((mv, f * multiplier));
        }
        let speed = SpeedDistribution::fit(
            dm.speed_p80_kmh,
            dm.speed_p95_kmh,
            dm.speed_min_kmh,
            dm.speed_max_kmh,
            spec.speed.cap_kmh(),
        );

        let s = &self.safety;
        if !(s.record_ttc_s > 0.0
            && s.critical_ttc_s > 0.0
            && s.severe_ttc_s > 0.0
            && s.episode_gap_s >= 0.0
            && s.heatmap_cell_m > 0.0)
        {
            return Err(invalid("safety", "thresholds must be positive"));
        }

        Ok(SimSetup {
            name: self.name.clone(),
            spec: *spec,
            dt: run.dt_s,
            warmup_s: run.warmup_s,
            horizon_s: run.horizon_s,
            driver_model: run.driver_model,
            network,
            plan,
            through,
            turning,
            tau_unit: m.tau_unit,
            ftable_through: self.load_ftable(&m.ftable_through)?,
            ftable_turning: self.load_ftable(&m.ftable_turning)?,
            bounds: AccelBounds {
                min: m.accel_min,
                max: m.accel_max,
            },
            emergency_gap_m: m.emergency_gap_m,
            vehicle_length_m: m.vehicle_length_m,
            merge_headway_s: m.merge_headway_s,
            merge_min_gap_m: m.merge_min_gap_m,
            yellow_stop_decel: m.yellow_stop_decel,
            driver: self.driver.clone(),
            demand: DemandSpec {
                flows,
                multiplier,
                speed,
                entry_headway_s: dm.entry_headway_s,
                entry_min_gap_m: dm.entry_min_gap_m,
            },
            safety: self.safety.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_matches_code_defaults() {
        let mut file = ScenarioConfig::builtin();
        file.base_dir = None;
        assert_eq!(file, ScenarioConfig::default());
    }

    #[test]
    fn default_demand_totals_site_volume() {
        assert_eq!(FlowMap::default().total(), 2667.0);
    }

    #[test]
    fn speed_fit_hits_anchors() {
        let d = SpeedDistribution::fit(55.0, 75.0, 10.0, 90.0, None);
        assert!((d.quantile(0.80) - 55.0).abs() < 1e-9);
        assert!((d.quantile(0.95) - 75.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ScenarioConfig::default();
        cfg.demand.speed_p95_kmh = 50.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::default();
        cfg.model.profile = "nowhere".into();
        assert!(matches!(cfg.validate(), Err(ConfigError::UnknownProfile(_))));

        let mut cfg = ScenarioConfig::default();
        cfg.demand.flows.eb.left = -1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::default();
        cfg.network.approaches.sb.left_lanes = 0;
        assert!(cfg.validate().is_err(), "left flow without a left lane");

        let mut cfg = ScenarioConfig::default();
        cfg.model.through = Some(CfParams {
            alpha: 2.0,
            ..CfParams::BLACKSBURG_THROUGH
        });
        assert!(matches!(cfg.validate(), Err(ConfigError::Params { .. })));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ScenarioConfig::from_toml_str("[run]\nbogus = 1\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ScenarioConfig::from_toml_str("seed = 9\n[run]\nhorizon_s = 60.0\n", "t").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.run.horizon_s, 60.0);
        assert_eq!(cfg.run.dt_s, 0.1);
    }

    #[test]
    fn matrix_has_27_cells() {
        assert_eq!(ScenarioConfig::default().matrix_specs().len(), 27);
    }

    #[test]
    fn turning_share() {
        let setup = ScenarioConfig::default()
            .resolve(&ScenarioConfig::default().spec())
            .unwrap();
        let s = setup.demand.turning_share(Approach::Eb);
        assert!((s - 220.0 / 920.0).abs() < 1e-12);
    }
}
