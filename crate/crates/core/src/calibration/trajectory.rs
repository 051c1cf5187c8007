use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::engine::TrajectoryRow;
use crate::kernel::MovementClass;

pub const TRAJECTORY_HEADER: [&str; 7] = [
    "t_s",
    "vehicle_id",
    "x_m",
    "y_m",
    "speed_mps",
    "lane_id",
    "movement",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub vehicle_id: u64,
    pub x: f64,
    pub y: f64,
    /// m/s
    pub v: f64,
    pub lane: u64,
    pub movement: MovementClass,
    /// Derived from `v` by finite differences, m/s².
    pub accel: f64,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, line: u64) -> Result<T, CalibrationError>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(k).ok_or_else(|| CalibrationError::Malformed {
        line,
        message: format!("missing column {}", TRAJECTORY_HEADER[k]),
    })?;
    raw.trim().parse().map_err(|e: T::Err| CalibrationError::Malformed {
        line,
        message: format!("{} '{}': {e}", TRAJECTORY_HEADER[k], raw),
    })
}

/// Reads a trajectory CSV.
///
/// Rows of one vehicle must appear with strictly increasing time. The result
/// is grouped by vehicle (ascending id), time-sorted within each vehicle,
/// with accelerations filled in: central differences at interior points,
/// one-sided at the ends, zero for a single point.
pub fn load_trajectories<R: Read>(reader: R) -> Result<Vec<TrajectoryPoint>, CalibrationError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CalibrationError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != TRAJECTORY_HEADER {
        return Err(CalibrationError::Header {
            expected: TRAJECTORY_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut by_vehicle: HashMap<u64, Vec<TrajectoryPoint>> = HashMap::new();
    let mut rec = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut rec).map_err(|e| CalibrationError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != TRAJECTORY_HEADER.len() {
            return Err(CalibrationError::Malformed {
                line,
                message: format!("expected {} fields, found {}", TRAJECTORY_HEADER.len(), rec.len()),
            });
        }
        let t: f64 = field(&rec, 0, line)?;
        let vehicle_id: u64 = field(&rec, 1, line)?;
        let x: f64 = field(&rec, 2, line)?;
        let y: f64 = field(&rec, 3, line)?;
        let v: f64 = field(&rec, 4, line)?;
        let lane: u64 = field(&rec, 5, line)?;
        let movement: MovementClass = field(&rec, 6, line)?;
        for (name, value) in [("t_s", t), ("x_m", x), ("y_m", y), ("speed_mps", v)] {
            if !value.is_finite() {
                return Err(CalibrationError::Malformed {
                    line,
                    message: format!("{name} must be finite"),
                });
            }
        }
        if v < 0.0 {
            return Err(CalibrationError::Malformed {
                line,
                message: format!("negative speed {v}"),
            });
        }
        let points = by_vehicle.entry(vehicle_id).or_default();
        if let Some(prev) = points.last() {
            if t == prev.t {
                return Err(CalibrationError::Duplicate {
                    line,
                    vehicle: vehicle_id,
                    t,
                });
            }
            if t < prev.t {
                return Err(CalibrationError::NonMonotonic {
                    line,
                    vehicle: vehicle_id,
                    t,
                    prev: prev.t,
                });
            }
        }
        points.push(TrajectoryPoint {
            t,
            vehicle_id,
            x,
            y,
            v,
            lane,
            movement,
            accel: 0.0,
        });
    }

    let mut ids: Vec<u64> = by_vehicle.keys().copied().collect();
    ids.sort_unstable();
    let mut out = Vec::new();
    for id in ids {
        let mut pts = by_vehicle.remove(&id).unwrap_or_default();
        let n = pts.len();
        for k in 0..n {
            let (a, b) = match (k.checked_sub(1), (k + 1 < n).then_some(k + 1)) {
                (Some(a), Some(b)) => (a, b),
                (None, Some(b)) => (k, b),
                (Some(a), None) => (a, k),
                (None, None) => continue,
            };
            pts[k].accel = (pts[b].v - pts[a].v) / (pts[b].t - pts[a].t);
        }
        out.extend(pts);
    }
    Ok(out)
}

/// Writes simulator trajectory rows in the format [`load_trajectories`] reads.
///
/// Floats are written in shortest round-trip form so a reload is exact.
pub fn write_trajectories<W: Write>(writer: W, rows: &[TrajectoryRow]) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| CalibrationError::Io(std::io::Error::other(e));
    w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(&[
            r.t.to_string(),
            r.vehicle_id.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.speed.to_string(),
            r.lane.to_string(),
            r.movement.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "t_s,vehicle_id,x_m,y_m,speed_mps,lane_id,movement\n";

    #[test]
    fn three_rows() {
        let text = format!("{HEAD}0.0,1,0,0,10,0,through\n0.1,1,1,0,11,0,through\n0.2,1,2.1,0,13,0,through\n");
        let pts = load_trajectories(text.as_bytes()).unwrap();
        assert_eq!(pts.len(), 3);
        assert!((pts[1].accel - (13.0 - 10.0) / 0.2).abs() < 1e-9);
        assert!((pts[0].accel - 10.0).abs() < 1e-9);
        assert!((pts[2].accel - 20.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_names_line() {
        let text = format!("{HEAD}0.0,1,0,0,10,0,through\n0.0,1,1,0,11,0,through\n");
        match load_trajectories(text.as_bytes()) {
            Err(CalibrationError::Duplicate { line, vehicle, .. }) => {
                assert_eq!((line, vehicle), (3, 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotonic_rejected() {
        let text = format!("{HEAD}0.2,1,0,0,10,0,through\n0.1,1,1,0,11,0,through\n");
        assert!(matches!(
            load_trajectories(text.as_bytes()),
            Err(CalibrationError::NonMonotonic { line: 3, .. })
        ));
    }

    #[test]
    fn malformed_rows() {
        let text = format!("{HEAD}0.0,1,0,0,abc,0,through\n");
        assert!(matches!(
            load_trajectories(text.as_bytes()),
            Err(CalibrationError::Malformed { line: 2, .. })
        ));
        let text = format!("{HEAD}0.0,1,0,0,1,0,sideways\n");
        assert!(load_trajectories(text.as_bytes()).is_err());
        let text = format!("{HEAD}0.0,1,0,0,-1,0,through\n");
        assert!(load_trajectories(text.as_bytes()).is_err());
        assert!(matches!(
            load_trajectories("a,b\n".as_bytes()),
            Err(CalibrationError::Header { .. })
        ));
    }

    #[test]
    fn write_then_load_is_exact() {
        let rows = vec![
            TrajectoryRow {
                t: 0.1 * 3.0,
                vehicle_id: 4,
                x: -262.25 + 1e-13,
                y: 1.75,
                speed: 12.345678901234567,
                lane: 2,
                movement: MovementClass::Turning,
            },
            TrajectoryRow {
                t: 0.4,
                vehicle_id: 4,
                x: -261.0,
                y: 1.75,
                speed: 12.0,
                lane: 2,
                movement: MovementClass::Turning,
            },
        ];
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &rows).unwrap();
        let pts = load_trajectories(buf.as_slice()).unwrap();
        assert_eq!(pts[0].t.to_bits(), rows[0].t.to_bits());
        assert_eq!(pts[0].x.to_bits(), rows[0].x.to_bits());
        assert_eq!(pts[0].v.to_bits(), rows[0].speed.to_bits());
    }
}
