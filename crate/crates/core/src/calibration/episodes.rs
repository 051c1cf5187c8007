use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::TrajectoryPoint;
use crate::kernel::{LeaderRelation, MovementClass, KMH_PER_MPS};
use crate::safety::car_following_ttc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedSample {
    pub t: f64,
    pub ttc: f64,
    /// Follower speed, km/hr.
    pub v_kmh: f64,
    /// Follower acceleration, m/s².
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedEpisode {
    pub follower_id: u64,
    pub leader_id: u64,
    pub movement: MovementClass,
    pub samples: Vec<ObservedSample>,
}

/// Unit travel direction of each lane: the normalized sum of every vehicle's
/// displacement while in that lane. Falls back to +x for a lane where nothing moved.
fn lane_axes(points: &[TrajectoryPoint]) -> HashMap<u64, (f64, f64)> {
    let mut first_last: HashMap<(u64, u64), (usize, usize)> = HashMap::new();
    for (k, p) in points.iter().enumerate() {
        first_last
            .entry((p.lane, p.vehicle_id))
            .and_modify(|e| e.1 = k)
            .or_insert((k, k));
    }
    let mut sums: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut keys: Vec<_> = first_last.into_iter().collect();
    keys.sort_unstable_by_key(|(k, _)| *k);
    for ((lane, _), (a, b)) in keys {
        let e = sums.entry(lane).or_insert((0.0, 0.0));
        e.0 += points[b].x - points[a].x;
        e.1 += points[b].y - points[a].y;
    }
    sums.into_iter()
        .map(|(lane, (dx, dy))| {
            let n = (dx * dx + dy * dy).sqrt();
            (lane, if n > 0.0 { (dx / n, dy / n) } else { (1.0, 0.0) })
        })
        .collect()
}

/// Car-following episodes in trajectory data.
///
/// At every timestamp, vehicles sharing a lane are ordered along the lane's
/// travel direction and each is paired with the next one ahead. A pair is a
/// sample when the follower is car-following by the shared rule. Samples of
/// a follower form one episode while the leader stays the same and the
/// follower's rows are consecutive.
///
/// `points` must be grouped per vehicle and time-sorted, as returned by
/// [`super::load_trajectories`]. Output is ordered by (follower, start time).
pub fn extract_episodes(points: &[TrajectoryPoint], vehicle_length: f64) -> Vec<ObservedEpisode> {
    let axes = lane_axes(points);

    // row index of every point within its own vehicle's trajectory
    let mut row_of = vec![0usize; points.len()];
    let mut k = 0;
    for i in 0..points.len() {
        if i > 0 && points[i].vehicle_id != points[i - 1].vehicle_id {
            k = 0;
        }
        row_of[i] = k;
        k += 1;
    }

    let mut frames: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        // non-negative times order like their bit patterns
        frames.entry(p.t.to_bits() ^ (1 << 63)).or_default().push(i);
    }

    // (follower, row) -> (leader, sample)
    let mut samples: BTreeMap<(u64, usize), (u64, ObservedSample)> = BTreeMap::new();
    for members in frames.values() {
        let mut by_lane: BTreeMap<u64, Vec<(f64, usize)>> = BTreeMap::new();
        for &i in members {
            let p = &points[i];
            let (ax, ay) = axes[&p.lane];
            by_lane.entry(p.lane).or_default().push((p.x * ax + p.y * ay, i));
        }
        for mut lane in by_lane.into_values() {
            lane.sort_by(|a, b| a.0.total_cmp(&b.0).then(points[a.1].vehicle_id.cmp(&points[b.1].vehicle_id)));
            for w in lane.windows(2) {
                let (sf, fi) = w[0];
                let (sl, li) = w[1];
                let f = &points[fi];
                let l = &points[li];
                let rel = LeaderRelation {
                    gap: (sl - sf - vehicle_length).max(0.0),
                    delta_v: f.v - l.v,
                    same_lane: true,
                };
                if let Some(ttc) = car_following_ttc(f.v, &rel) {
                    samples.insert(
                        (f.vehicle_id, row_of[fi]),
                        (
                            l.vehicle_id,
                            ObservedSample {
                                t: f.t,
                                ttc,
                                v_kmh: f.v * KMH_PER_MPS,
                                accel: f.accel,
                            },
                        ),
                    );
                }
            }
        }
    }

    let movement_of: HashMap<u64, MovementClass> =
        points.iter().map(|p| (p.vehicle_id, p.movement)).collect();
    let mut out: Vec<ObservedEpisode> = Vec::new();
    let mut prev: Option<(u64, usize, u64)> = None;
    for ((follower, row), (leader, s)) in samples {
        let continues = prev == Some((follower, row.wrapping_sub(1), leader));
        if continues {
            out.last_mut().expect("open episode").samples.push(s);
        } else {
            out.push(ObservedEpisode {
                follower_id: follower,
                leader_id: leader,
                movement: movement_of[&follower],
                samples: vec![s],
            });
        }
        prev = Some((follower, row, leader));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(t: f64, id: u64, x: f64, v: f64) -> TrajectoryPoint {
        TrajectoryPoint {
            t,
            vehicle_id: id,
            x,
            y: 0.0,
            v,
            lane: 0,
            movement: MovementClass::Through,
            accel: 0.0,
        }
    }

    fn pair(vf: f64, vl: f64, steps: usize) -> Vec<TrajectoryPoint> {
        let mut f = Vec::new();
        let mut l = Vec::new();
        for k in 0..steps {
            let t = k as f64 * 0.1;
            f.push(pt(t, 1, vf * t, vf));
            l.push(pt(t, 2, 60.0 + vl * t, vl));
        }
        f.extend(l);
        f
    }

    #[test]
    fn constant_closing_is_one_episode() {
        let pts = pair(15.0, 10.0, 50);
        let eps = extract_episodes(&pts, 4.5);
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].samples.len(), 50);
        assert_eq!((eps[0].follower_id, eps[0].leader_id), (1, 2));
        let s = &eps[0].samples[10];
        let gap = 60.0 + 10.0 * 1.0 - 15.0 * 1.0 - 4.5;
        assert!((s.ttc - gap / 5.0).abs() < 1e-9);
    }

    #[test]
    fn slower_follower_has_no_episode() {
        assert!(extract_episodes(&pair(8.0, 10.0, 50), 4.5).is_empty());
    }

    #[test]
    fn slow_follower_excluded() {
        assert!(extract_episodes(&pair(4.0, 1.0, 50), 4.5).is_empty());
    }
}
