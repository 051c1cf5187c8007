use super::{CalibrationError, ObservedEpisode};
use crate::kernel::ObservedAccelTable;

pub const DEFAULT_BIN_WIDTH: f64 = 0.5;
pub const DEFAULT_MAX_TTC: f64 = 10.0;

/// Mean observed follower acceleration per TTC bin.
///
/// Samples above `max_ttc` are dropped. Each bin sums its samples in sorted
/// order, so the table does not depend on episode order.
pub fn build_f_table(
    episodes: &[ObservedEpisode],
    bin_width: f64,
    max_ttc: f64,
) -> Result<ObservedAccelTable, CalibrationError> {
    if episodes.is_empty() {
        return Err(CalibrationError::NoEpisodes);
    }
    if !(bin_width > 0.0 && max_ttc > 0.0) {
        return Err(CalibrationError::Bins(format!(
            "bin width {bin_width} and max ttc {max_ttc} must be positive"
        )));
    }
    let mut table = ObservedAccelTable {
        bin_width,
        max_ttc,
        bins: Vec::new(),
    };
    let n = ObservedAccelTable::bin_count(bin_width, max_ttc);
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n];
    for s in episodes.iter().flat_map(|e| &e.samples) {
        if let Some(k) = table.bin_index(s.ttc) {
            members[k].push(s.accel);
        }
    }
    table.bins = members
        .into_iter()
        .map(|mut a| {
            if a.is_empty() {
                return (0.0, 0);
            }
            a.sort_by(f64::total_cmp);
            (a.iter().sum::<f64>() / a.len() as f64, a.len() as u64)
        })
        .collect();
    Ok(table)
}

pub fn bin_occupancy(table: &ObservedAccelTable) -> Vec<u64> {
    table.bins.iter().map(|b| b.1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::ObservedSample;
    use crate::kernel::MovementClass;

    fn ep(samples: &[(f64, f64)]) -> ObservedEpisode {
        ObservedEpisode {
            follower_id: 1,
            leader_id: 2,
            movement: MovementClass::Through,
            samples: samples
                .iter()
                .map(|&(ttc, accel)| ObservedSample {
                    t: 0.0,
                    ttc,
                    v_kmh: 30.0,
                    accel,
                })
                .collect(),
        }
    }

    #[test]
    fn one_bin_mean() {
        let t = build_f_table(&[ep(&[(2.1, -1.0), (2.3, -3.0)])], 0.5, 10.0).unwrap();
        assert_eq!(t.bins.len(), 20);
        assert_eq!(t.bins[4], (-2.0, 2));
        assert_eq!(t.lookup(2.2), -2.0);
    }

    #[test]
    fn out_of_range_dropped() {
        let t = build_f_table(&[ep(&[(10.2, 5.0)])], 0.5, 10.0).unwrap();
        assert!(t.bins.iter().all(|b| b.1 == 0));
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(
            build_f_table(&[], 0.5, 10.0),
            Err(CalibrationError::NoEpisodes)
        ));
    }

    #[test]
    fn order_independent() {
        let a = ep(&[(1.1, 0.1), (1.2, 0.7), (1.3, -0.3333)]);
        let b = ep(&[(1.4, 1e-17), (3.0, 2.0)]);
        let t1 = build_f_table(&[a.clone(), b.clone()], 0.5, 10.0).unwrap();
        let mut b2 = b;
        b2.samples.reverse();
        let t2 = build_f_table(&[b2, a], 0.5, 10.0).unwrap();
        assert_eq!(t1, t2);
    }
}
