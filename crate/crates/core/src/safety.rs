//! Car-following detection, TTC conflict records, episode summaries and
//! heatmap grids.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{instantaneous_ttc, select_model, LeaderRelation, ModelChoice, MovementClass};
use crate::network::LaneId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SafetyError {
    #[error("total vehicle count must be positive")]
    ZeroTotal,
}

/// TTC of a follower that is car-following, or `None` when it is not.
///
/// Car-following means moving at 5 m/s or more while closing on a slower
/// vehicle in the same lane. The simulator, the conflict log and the
/// trajectory episode extractor all go through this one rule.
pub fn car_following_ttc(v: f64, rel: &LeaderRelation) -> Option<f64> {
    match select_model(v, Some(rel)) {
        ModelChoice::SafetyOvm => instantaneous_ttc(rel),
        ModelChoice::Default => None,
    }
}

/// A follower and its nearest vehicle leader at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerView {
    pub t: f64,
    pub step: u64,
    pub follower_id: u64,
    pub leader_id: u64,
    /// Follower front bumper.
    pub x: f64,
    pub y: f64,
    /// Follower speed, m/s.
    pub v: f64,
    pub rel: LeaderRelation,
    pub movement: MovementClass,
    pub lane: LaneId,
    pub beyond_stop_bar: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub t: f64,
    pub follower_id: u64,
    pub leader_id: u64,
    pub x: f64,
    pub y: f64,
    pub ttc: f64,
    pub movement: MovementClass,
    pub lane: LaneId,
    /// Follower already past its approach stop bar (inside the box or on an exit leg).
    pub beyond_stop_bar: bool,
}

/// Conflict records for one snapshot: every car-following follower with TTC at or below `record_ttc`.
pub fn observe(views: &[FollowerView], record_ttc: f64) -> Vec<ConflictRecord> {
    views
        .iter()
        .filter_map(|fv| {
            let ttc = car_following_ttc(fv.v, &fv.rel)?;
            (ttc > 0.0 && ttc <= record_ttc).then_some(ConflictRecord {
                t: fv.t,
                follower_id: fv.follower_id,
                leader_id: fv.leader_id,
                x: fv.x,
                y: fv.y,
                ttc,
                movement: fv.movement,
                lane: fv.lane,
                beyond_stop_bar: fv.beyond_stop_bar,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub follower_id: u64,
    pub leader_id: u64,
    pub start_t: f64,
    pub end_t: f64,
    pub min_ttc: f64,
    pub records: u64,
    pub critical_instances_1_5: u64,
    pub critical_instances_1_0: u64,
}

/// Instance thresholds counted in every episode.
pub const CRITICAL_TTC_S: f64 = 1.5;
pub const SEVERE_TTC_S: f64 = 1.0;

/// Groups time-ordered records into per-pair episodes.
///
/// Records of the same (follower, leader) pair no more than `gap_tolerance`
/// apart belong to one episode. Output is ordered by (start_t, follower, leader).
pub fn summarize_episodes(records: &[ConflictRecord], gap_tolerance: f64) -> Vec<EpisodeSummary> {
    let mut open: HashMap<(u64, u64), usize> = HashMap::new();
    let mut out: Vec<EpisodeSummary> = Vec::new();
    for r in records {
        let key = (r.follower_id, r.leader_id);
        let continues = open
            .get(&key)
            .is_some_and(|&i| r.t - out[i].end_t <= gap_tolerance + 1e-9);
        if continues {
            let e = &mut out[open[&key]];
            e.end_t = r.t;
            e.min_ttc = e.min_ttc.min(r.ttc);
            e.records += 1;
            e.critical_instances_1_5 += u64::from(r.ttc <= CRITICAL_TTC_S);
            e.critical_instances_1_0 += u64::from(r.ttc <= SEVERE_TTC_S);
        } else {
            open.insert(key, out.len());
            out.push(EpisodeSummary {
                follower_id: r.follower_id,
                leader_id: r.leader_id,
                start_t: r.t,
                end_t: r.t,
                min_ttc: r.ttc,
                records: 1,
                critical_instances_1_5: u64::from(r.ttc <= CRITICAL_TTC_S),
                critical_instances_1_0: u64::from(r.ttc <= SEVERE_TTC_S),
            });
        }
    }
    out.sort_by(|a, b| {
        a.start_t
            .total_cmp(&b.start_t)
            .then(a.follower_id.cmp(&b.follower_id))
            .then(a.leader_id.cmp(&b.leader_id))
    });
    out
}

/// Distinct followers with at least one instance at or below `threshold`.
pub fn critical_followers(summaries: &[EpisodeSummary], threshold: f64) -> BTreeSet<u64> {
    summaries
        .iter()
        .filter(|e| e.min_ttc <= threshold)
        .map(|e| e.follower_id)
        .collect()
}

/// Share of `total_vehicles` that had at least one instance at or below `threshold`.
pub fn vehicle_critical_fraction(
    summaries: &[EpisodeSummary],
    total_vehicles: u64,
    threshold: f64,
) -> Result<f64, SafetyError> {
    if total_vehicles == 0 {
        return Err(SafetyError::ZeroTotal);
    }
    Ok(critical_followers(summaries, threshold).len() as f64 / total_vehicles as f64)
}

/// Episodes whose minimum TTC is at or below `threshold`.
pub fn critical_episode_count(summaries: &[EpisodeSummary], threshold: f64) -> u64 {
    summaries.iter().filter(|e| e.min_ttc <= threshold).count() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub mean_ttc: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub cell_size: f64,
    /// Only records with TTC at or below this value are binned.
    pub filter_ttc: f64,
    pub cells: BTreeMap<(i64, i64), HeatCell>,
}

impl HeatmapGrid {
    pub fn total_count(&self) -> u64 {
        self.cells.values().map(|c| c.count).sum()
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, ix: i64, iy: i64) -> (f64, f64) {
        (ix as f64 * self.cell_size, iy as f64 * self.cell_size)
    }
}

pub fn cell_of(x: f64, y: f64, cell_size: f64) -> (i64, i64) {
    ((x / cell_size).floor() as i64, (y / cell_size).floor() as i64)
}

/// Mean TTC per square cell over records with TTC ≤ `filter_ttc`.
pub fn heatmap(records: &[ConflictRecord], cell_size: f64, filter_ttc: f64) -> HeatmapGrid {
    let mut sums: BTreeMap<(i64, i64), (f64, u64)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.ttc <= filter_ttc) {
        let e = sums.entry(cell_of(r.x, r.y, cell_size)).or_insert((0.0, 0));
        e.0 += r.ttc;
        e.1 += 1;
    }
    HeatmapGrid {
        cell_size,
        filter_ttc,
        cells: sums
            .into_iter()
            .map(|(k, (s, n))| {
                (
                    k,
                    HeatCell {
                        mean_ttc: s / n as f64,
                        count: n,
                    },
                )
            })
            .collect(),
    }
}

/// Raw conflict points with TTC ≤ `threshold`, unaveraged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictPoint {
    pub x: f64,
    pub y: f64,
    pub ttc: f64,
}

pub fn instantaneous_points(records: &[ConflictRecord], threshold: f64) -> Vec<ConflictPoint> {
    records
        .iter()
        .filter(|r| r.ttc <= threshold)
        .map(|r| ConflictPoint {
            x: r.x,
            y: r.y,
            ttc: r.ttc,
        })
        .collect()
}

/// Safety metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSafety {
    pub total_vehicles: u64,
    pub conflict_records: u64,
    pub episodes: u64,
    /// Episodes with at least one instance ≤ 1.5 s.
    pub critical_episodes_1_5: u64,
    pub critical_episodes_1_0: u64,
    pub instances_1_5: u64,
    pub instances_1_0: u64,
    /// Distinct followers with an instance ≤ 1.5 s.
    pub vehicles_1_5: u64,
    pub vehicles_1_0: u64,
    pub vehicle_fraction_1_5: f64,
    pub vehicle_fraction_1_0: f64,
    /// Critical episodes (≤ 1.5 s) as a percentage of total vehicles.
    pub critical_episode_pct: f64,
    /// Share of records whose follower was past its stop bar.
    pub beyond_stop_bar_share: f64,
}

pub fn run_safety(
    records: &[ConflictRecord],
    total_vehicles: u64,
    episode_gap_s: f64,
    critical_ttc_s: f64,
    severe_ttc_s: f64,
) -> RunSafety {
    let eps = summarize_episodes(records, episode_gap_s);
    let v15 = critical_followers(&eps, critical_ttc_s).len() as u64;
    let v10 = critical_followers(&eps, severe_ttc_s).len() as u64;
    let ce15 = critical_episode_count(&eps, critical_ttc_s);
    let frac = |n: u64| {
        if total_vehicles == 0 {
            0.0
        } else {
            n as f64 / total_vehicles as f64
        }
    };
    let beyond = records.iter().filter(|r| r.beyond_stop_bar).count();
    RunSafety {
        total_vehicles,
        conflict_records: records.len() as u64,
        episodes: eps.len() as u64,
        critical_episodes_1_5: ce15,
        critical_episodes_1_0: critical_episode_count(&eps, severe_ttc_s),
        instances_1_5: records.iter().filter(|r| r.ttc <= critical_ttc_s).count() as u64,
        instances_1_0: records.iter().filter(|r| r.ttc <= severe_ttc_s).count() as u64,
        vehicles_1_5: v15,
        vehicles_1_0: v10,
        vehicle_fraction_1_5: frac(v15),
        vehicle_fraction_1_0: frac(v10),
        critical_episode_pct: 100.0 * frac(ce15),
        beyond_stop_bar_share: if records.is_empty() {
            0.0
        } else {
            beyond as f64 / records.len() as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn view(v: f64, gap: f64, dv: f64) -> FollowerView {
        FollowerView {
            t: 0.0,
            step: 0,
            follower_id: 1,
            leader_id: 2,
            x: 0.0,
            y: 0.0,
            v,
            rel: LeaderRelation {
                gap,
                delta_v: dv,
                same_lane: true,
            },
            movement: MovementClass::Through,
            lane: 0,
            beyond_stop_bar: false,
        }
    }

    fn rec(t: f64, f: u64, l: u64, ttc: f64) -> ConflictRecord {
        ConflictRecord {
            t,
            follower_id: f,
            leader_id: l,
            x: 0.0,
            y: 0.0,
            ttc,
            movement: MovementClass::Through,
            lane: 0,
            beyond_stop_bar: false,
        }
    }

    #[test]
    fn observe_examples() {
        assert!(observe(&[view(4.0, 2.0, 3.0)], 3.0).is_empty());
        assert!(observe(&[view(10.0, 20.0, 5.0)], 3.0).is_empty());
        let r = observe(&[view(10.0, 10.0, 5.0)], 3.0);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].ttc, 2.0);
        let mut other = view(10.0, 10.0, 5.0);
        other.rel.same_lane = false;
        assert!(observe(&[other], 3.0).is_empty());
    }

    #[test]
    fn episode_examples() {
        let r = [rec(1.0, 1, 2, 2.0), rec(1.1, 1, 2, 1.4), rec(1.2, 1, 2, 0.9)];
        let e = summarize_episodes(&r, 1.0);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].critical_instances_1_5, 2);
        assert_eq!(e[0].critical_instances_1_0, 1);
        assert_eq!(e[0].min_ttc, 0.9);

        let r = [rec(1.0, 1, 2, 2.0), rec(5.0, 1, 2, 2.0)];
        assert_eq!(summarize_episodes(&r, 1.0).len(), 2);

        let r = [rec(1.0, 1, 2, 2.0), rec(1.1, 1, 3, 2.0)];
        assert_eq!(summarize_episodes(&r, 1.0).len(), 2);
    }

    #[test]
    fn fraction_examples() {
        let mk = |n: u64| -> Vec<EpisodeSummary> {
            (0..n)
                .map(|i| EpisodeSummary {
                    follower_id: i,
                    leader_id: 10_000 + i,
                    start_t: 0.0,
                    end_t: 0.0,
                    min_ttc: 0.5,
                    records: 1,
                    critical_instances_1_5: 1,
                    critical_instances_1_0: 1,
                })
                .collect()
        };
        let f = vehicle_critical_fraction(&mk(31), 2667, 1.0).unwrap();
        assert!((f - 0.0116).abs() < 5e-5, "{f}");
        let f = vehicle_critical_fraction(&mk(210), 2667, 1.0).unwrap();
        assert!((f - 0.0787).abs() < 5e-5, "{f}");
        assert_eq!(vehicle_critical_fraction(&[], 2667, 1.0).unwrap(), 0.0);
        assert_eq!(
            vehicle_critical_fraction(&[], 0, 1.0),
            Err(SafetyError::ZeroTotal)
        );
    }

    #[test]
    fn heatmap_examples() {
        let g = heatmap(&[rec(0.0, 1, 2, 1.0), rec(0.1, 1, 2, 2.0)], 2.0, 3.0);
        assert_eq!(g.cells.len(), 1);
        let c = &g.cells[&(0, 0)];
        assert_eq!((c.mean_ttc, c.count), (1.5, 2));
        assert!(heatmap(&[], 2.0, 3.0).cells.is_empty());
        let mut r = rec(0.0, 1, 2, 1.0);
        r.x = -0.5;
        r.y = 3.9;
        assert_eq!(heatmap(&[r], 2.0, 3.0).cells.keys().next(), Some(&(-1, 1)));
    }

    fn arb_records() -> impl Strategy<Value = Vec<ConflictRecord>> {
        prop::collection::vec((0u64..4, 0u64..3, 0.01f64..3.0, 0u32..50), 0..200).prop_map(|v| {
            let mut out: Vec<ConflictRecord> = v
                .into_iter()
                .map(|(f, l, ttc, k)| rec(k as f64 * 0.1, f, 10 + l, ttc))
                .collect();
            out.sort_by(|a, b| a.t.total_cmp(&b.t));
            out
        })
    }

    proptest! {
        #[test]
        fn episodes_partition_records(records in arb_records(), tol in 0.0f64..2.0) {
            let eps = summarize_episodes(&records, tol);
            prop_assert_eq!(eps.iter().map(|e| e.records).sum::<u64>(), records.len() as u64);
            for e in &eps {
                prop_assert!(e.end_t >= e.start_t);
                for r in records.iter().filter(|r| {
                    r.follower_id == e.follower_id && r.leader_id == e.leader_id
                        && r.t >= e.start_t && r.t <= e.end_t
                }) {
                    prop_assert!(e.min_ttc <= r.ttc);
                }
            }
        }

        #[test]
        fn fraction_monotone_in_threshold(records in arb_records(), a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let eps = summarize_episodes(&records, 1.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(
                vehicle_critical_fraction(&eps, 100, lo).unwrap()
                    <= vehicle_critical_fraction(&eps, 100, hi).unwrap()
            );
        }

        #[test]
        fn heatmap_count_matches_filter(records in arb_records(), filter in 0.0f64..3.0) {
            let g = heatmap(&records, 2.0, filter);
            let n = records.iter().filter(|r| r.ttc <= filter).count() as u64;
            prop_assert_eq!(g.total_count(), n);
        }

        #[test]
        fn observed_ttc_in_range(v in 0.0f64..30.0, gap in 0.0f64..100.0, dv in -10.0f64..10.0) {
            for r in observe(&[view(v, gap, dv)], 3.0) {
                prop_assert!(r.ttc > 0.0 && r.ttc <= 3.0);
            }
        }
    }
}
