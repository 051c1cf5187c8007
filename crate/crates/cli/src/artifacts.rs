use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sovm_core::calibration::write_trajectories;
use sovm_core::config::SimSetup;
use sovm_core::engine::{cf_episodes, RunLog};
use sovm_core::safety::{heatmap, instantaneous_points, ConflictRecord, HeatmapGrid};

use crate::svg::{render_heatmap_svg, Layer};
use crate::{io_err, CliError};

pub const CONFLICTS_HEADER: [&str; 7] = ["t_s", "follower_id", "leader_id", "x_m", "y_m", "ttc_s", "movement"];
pub const HEATMAP_HEADER: [&str; 6] = ["ix", "iy", "x_min_m", "y_min_m", "mean_ttc_s", "count"];

pub fn conflicts_csv(records: &[ConflictRecord]) -> String {
    let mut s = CONFLICTS_HEADER.join(",");
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{:.3},{},{},{:.3},{:.3},{:.6},{}",
            r.t, r.follower_id, r.leader_id, r.x, r.y, r.ttc, r.movement
        );
    }
    s
}

pub fn heatmap_csv(grid: &HeatmapGrid) -> String {
    let mut s = HEATMAP_HEADER.join(",");
    s.push('\n');
    for (&(ix, iy), c) in &grid.cells {
        let (x0, y0) = grid.cell_origin(ix, iy);
        let _ = writeln!(s, "{ix},{iy},{x0:.3},{y0:.3},{:.6},{}", c.mean_ttc, c.count);
    }
    s
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, data).map_err(|e| io_err("writing", path, e))
}

/// Files of one replication:
///
/// * `conflicts.csv`: every record with TTC at or below the record threshold
/// * `heatmap.csv`, `heatmap.svg`: mean TTC per cell
/// * `critical.svg`: raw points at or below the critical threshold
/// * `trajectories.csv`, `cf_episodes.json`: only when the log carries them
pub fn write_run_artifacts(dir: &Path, setup: &SimSetup, log: &RunLog) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err("creating", dir, e))?;
    let safety = &setup.safety;
    let label = setup.spec.label();

    write(&dir.join("conflicts.csv"), conflicts_csv(&log.conflicts))?;

    let grid = heatmap(&log.conflicts, safety.heatmap_cell_m, safety.record_ttc_s);
    write(&dir.join("heatmap.csv"), heatmap_csv(&grid))?;
    write(
        &dir.join("heatmap.svg"),
        render_heatmap_svg(
            &Layer::Grid(&grid),
            &setup.network,
            &format!("{label}: mean TTC where TTC <= {} s", safety.record_ttc_s),
        ),
    )?;
    let points = instantaneous_points(&log.conflicts, safety.critical_ttc_s);
    write(
        &dir.join("critical.svg"),
        render_heatmap_svg(
            &Layer::Points(&points),
            &setup.network,
            &format!("{label}: instantaneous TTC <= {} s", safety.critical_ttc_s),
        ),
    )?;

    if !log.trajectories.is_empty() {
        let path = dir.join("trajectories.csv");
        let file = fs::File::create(&path).map_err(|e| io_err("creating", &path, e))?;
        write_trajectories(std::io::BufWriter::new(file), &log.trajectories)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    }
    if !log.car_following.is_empty() {
        let eps = cf_episodes(&log.car_following);
        let json = serde_json::to_string(&eps).map_err(|e| CliError::Runtime(e.to_string()))?;
        write(&dir.join("cf_episodes.json"), json)?;
    }
    Ok(())
}
