use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use sovm_core::kernel::{LeaderRelation, MovementClass};
use sovm_core::safety::*;

fn record(t: f64, follower_id: u64, leader_id: u64, x: f64, y: f64, ttc: f64) -> ConflictRecord {
    ConflictRecord {
        t,
        follower_id,
        leader_id,
        x,
        y,
        ttc,
        movement: MovementClass::Through,
        lane: 0,
        beyond_stop_bar: false,
    }
}

fn view(v: f64, gap: f64, delta_v: f64) -> FollowerView {
    FollowerView {
        t: 1.0,
        step: 10,
        follower_id: 1,
        leader_id: 2,
        x: 0.0,
        y: 0.0,
        v,
        rel: LeaderRelation {
            gap,
            delta_v,
            same_lane: true,
        },
        movement: MovementClass::Through,
        lane: 0,
        beyond_stop_bar: false,
    }
}

#[test]
fn observe_examples() {
    assert!(observe(&[view(4.0, 1.0, 3.0)], 3.0).is_empty());
    assert!(observe(&[view(10.0, 20.0, 5.0)], 3.0).is_empty());
    let r = observe(&[view(10.0, 10.0, 5.0)], 3.0);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].ttc, 2.0);
}

#[test]
fn episode_examples() {
    let recs = [
        record(1.0, 1, 2, 0.0, 0.0, 2.0),
        record(1.1, 1, 2, 0.0, 0.0, 1.4),
        record(1.2, 1, 2, 0.0, 0.0, 0.9),
        record(5.0, 1, 2, 0.0, 0.0, 2.5),
    ];
    let eps = summarize_episodes(&recs, 1.0);
    assert_eq!(eps.len(), 2);
    assert_eq!(eps[0].critical_instances_1_5, 2);
    assert_eq!(eps[0].critical_instances_1_0, 1);
    assert_eq!(eps[0].min_ttc, 0.9);
    assert_eq!((eps[0].start_t, eps[0].end_t), (1.0, 1.2));
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
    assert!((vehicle_critical_fraction(&mk(31), 2667, 1.0).unwrap() - 0.0116).abs() < 5e-5);
    assert!((vehicle_critical_fraction(&mk(210), 2667, 1.0).unwrap() - 0.0787).abs() < 5e-5);
    assert_eq!(vehicle_critical_fraction(&[], 2667, 1.0).unwrap(), 0.0);
    assert!(vehicle_critical_fraction(&mk(1), 0, 1.0).is_err());
}

#[test]
fn heatmap_examples() {
    let g = heatmap(&[record(0.0, 1, 2, 0.5, 0.5, 1.0), record(0.0, 3, 4, 1.5, 1.9, 2.0)], 2.0, 3.0);
    assert_eq!(g.cells.len(), 1);
    let c = &g.cells[&(0, 0)];
    assert_eq!((c.mean_ttc, c.count), (1.5, 2));
    assert!(heatmap(&[], 2.0, 3.0).cells.is_empty());
}

fn records(n: usize) -> impl Strategy<Value = Vec<ConflictRecord>> {
    proptest::collection::vec(
        (0u32..3000, 1u64..40, -60.0f64..60.0, -60.0f64..60.0, 0.01f64..3.0),
        n,
    )
    .prop_map(|rows| {
        let mut out: Vec<ConflictRecord> = rows
            .into_iter()
            .map(|(step, f, x, y, ttc)| record(step as f64 * 0.1, f, f + 1, x, y, ttc))
            .collect();
        out.sort_by(|a, b| a.t.total_cmp(&b.t));
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heatmap_matches_brute_force(recs in records(1000), cell in 0.5f64..5.0, filter in 0.5f64..3.0) {
        let grid = heatmap(&recs, cell, filter);
        // group by scanning every record for every cell seen
        let mut keys: Vec<(i64, i64)> = recs
            .iter()
            .filter(|r| r.ttc <= filter)
            .map(|r| ((r.x / cell).floor() as i64, (r.y / cell).floor() as i64))
            .collect();
        keys.sort();
        keys.dedup();
        prop_assert_eq!(grid.cells.len(), keys.len());
        for k in keys {
            let members: Vec<f64> = recs
                .iter()
                .filter(|r| r.ttc <= filter && ((r.x / cell).floor() as i64, (r.y / cell).floor() as i64) == k)
                .map(|r| r.ttc)
                .collect();
            let c = &grid.cells[&k];
            prop_assert_eq!(c.count, members.len() as u64);
            let mean = members.iter().sum::<f64>() / members.len() as f64;
            prop_assert!((c.mean_ttc - mean).abs() <= 1e-12);
        }
        prop_assert_eq!(grid.total_count(), recs.iter().filter(|r| r.ttc <= filter).count() as u64);
    }

    #[test]
    fn episodes_partition_records(recs in records(300), tol in 0.05f64..3.0) {
        let eps = summarize_episodes(&recs, tol);
        prop_assert_eq!(eps.iter().map(|e| e.records).sum::<u64>(), recs.len() as u64);
        let mut by_pair: HashMap<(u64, u64), Vec<f64>> = HashMap::new();
        for r in &recs {
            by_pair.entry((r.follower_id, r.leader_id)).or_default().push(r.ttc);
        }
        for e in &eps {
            prop_assert!(e.end_t >= e.start_t);
            let all = &by_pair[&(e.follower_id, e.leader_id)];
            prop_assert!(all.iter().any(|&t| t == e.min_ttc));
        }
    }

    #[test]
    fn fraction_monotone_in_threshold(recs in records(300), a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let eps = summarize_episodes(&recs, 1.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let f_lo = vehicle_critical_fraction(&eps, 100, lo).unwrap();
        let f_hi = vehicle_critical_fraction(&eps, 100, hi).unwrap();
        prop_assert!(f_lo <= f_hi);
        let distinct: BTreeSet<u64> = recs.iter().filter(|r| r.ttc <= hi).map(|r| r.follower_id).collect();
        prop_assert_eq!(critical_followers(&eps, hi), distinct);
    }

    #[test]
    fn observed_records_in_range(v in 0.0f64..30.0, gap in 0.0f64..100.0, dv in -10.0f64..10.0) {
        for r in observe(&[view(v, gap, dv)], 3.0) {
            prop_assert!(r.ttc > 0.0 && r.ttc <= 3.0);
            prop_assert!(v >= 5.0 && dv > 0.0);
        }
    }
}
