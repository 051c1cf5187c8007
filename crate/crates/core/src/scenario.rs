//! Scenario cells of the volume × speed-enforcement × signal-plan matrix.

use serde::{Deserialize, Serialize};

use crate::signal::PlanKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Volume {
    Half,
    Observed,
    Double,
}

impl Volume {
    pub const ALL: [Volume; 3] = [Volume::Half, Volume::Observed, Volume::Double];

    pub fn multiplier(self) -> f64 {
        match self {
            Volume::Half => 0.5,
            Volume::Observed => 1.0,
            Volume::Double => 2.0,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Volume::Half => "1/2V",
            Volume::Observed => "V",
            Volume::Double => "2V",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedCap {
    Observed,
    Cap65,
    Cap55,
}

impl SpeedCap {
    pub const ALL: [SpeedCap; 3] = [SpeedCap::Observed, SpeedCap::Cap65, SpeedCap::Cap55];

    /// Enforced speed in km/hr, if any.
    pub fn cap_kmh(self) -> Option<f64> {
        match self {
            SpeedCap::Observed => None,
            SpeedCap::Cap65 => Some(65.0),
            SpeedCap::Cap55 => Some(55.0),
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            SpeedCap::Observed => "S",
            SpeedCap::Cap65 => "65",
            SpeedCap::Cap55 => "55",
        }
    }
}

/// One cell of the scenario matrix plus its seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub volume: Volume,
    pub speed: SpeedCap,
    pub plan: PlanKind,
    pub seed: u64,
    pub replications: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse scenario label '{0}'")]
pub struct LabelError(pub String);

impl ScenarioSpec {
    /// Volume/speed convention, e.g. `2V_65` or `1/2V_S`.
    pub fn cell_label(&self) -> String {
        format!("{}_{}", self.volume.prefix(), self.speed.suffix())
    }

    /// Cell label plus plan name, e.g. `2V_65:split-phasing`.
    pub fn label(&self) -> String {
        format!("{}:{}", self.cell_label(), self.plan)
    }

    /// File-system safe form of [`ScenarioSpec::label`].
    pub fn dir_name(&self) -> String {
        self.label().replace('/', "-").replace(':', "__")
    }

    /// Seed of replication `k`.
    pub fn replication_seed(&self, k: u32) -> u64 {
        self.seed.wrapping_add(k as u64)
    }

    /// Parses a label produced by [`ScenarioSpec::label`] (or a bare cell label,
    /// which implies the current plan).
    pub fn parse_label(label: &str) -> Result<(Volume, SpeedCap, PlanKind), LabelError> {
        let err = || LabelError(label.to_string());
        let (cell, plan) = match label.split_once(':') {
            Some((c, p)) => (c, p.parse::<PlanKind>().map_err(|_| err())?),
            None => (label, PlanKind::Current),
        };
        let (v, s) = cell.rsplit_once('_').ok_or_else(err)?;
        let volume = Volume::ALL
            .into_iter()
            .find(|x| x.prefix() == v)
            .ok_or_else(err)?;
        let speed = SpeedCap::ALL
            .into_iter()
            .find(|x| x.suffix() == s)
            .ok_or_else(err)?;
        Ok((volume, speed, plan))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_labels() {
        let spec = ScenarioSpec {
            volume: Volume::Double,
            speed: SpeedCap::Cap65,
            plan: PlanKind::Current,
            seed: 1,
            replications: 5,
        };
        assert_eq!(spec.cell_label(), "2V_65");
        let half = ScenarioSpec {
            volume: Volume::Half,
            speed: SpeedCap::Observed,
            ..spec
        };
        assert_eq!(half.cell_label(), "1/2V_S");
        assert_eq!(half.dir_name(), "1-2V_S__current");
        assert!(ScenarioSpec::parse_label("3V_S").is_err());
        assert!(ScenarioSpec::parse_label("V_S:bogus").is_err());
    }

    proptest! {
        #[test]
        fn label_round_trips(v in 0usize..3, s in 0usize..3, p in 0usize..3) {
            let spec = ScenarioSpec {
                volume: Volume::ALL[v],
                speed: SpeedCap::ALL[s],
                plan: PlanKind::ALL[p],
                seed: 0,
                replications: 1,
            };
            let parsed = ScenarioSpec::parse_label(&spec.label()).unwrap();
            prop_assert_eq!(parsed, (spec.volume, spec.speed, spec.plan));
        }
    }
}
