//! Lane geometry of a single 4-leg intersection.
//!
//! Every lane is a straight segment. A through lane runs from its spawn
//! point across the intersection to the far end of the exit leg. A turning
//! movement uses three lanes: an approach lane ending at the stop bar, a
//! connector chord across the box, and an add lane alongside the exit leg
//! that merges into the outermost (rights) or innermost (lefts) through lane.
//!
//! The intersection centre is the origin, x points east and y north.
//! Traffic keeps right.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::MovementClass;
use crate::signal::PhaseId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("approach {0}: at least one through lane is required")]
    NoThroughLane(Approach),
    #[error("approach {approach}: {what} lanes must be 0 or 1, got {count}")]
    TooManyTurnLanes {
        approach: Approach,
        what: &'static str,
        count: u32,
    },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("merge length {merge} m does not fit in the {exit} m exit leg")]
    MergeBeyondExit { merge: f64, exit: f64 },
    #[error("lane {lane}: {detail}")]
    Lane { lane: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Eb,
    Wb,
    Nb,
    Sb,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::Eb, Approach::Wb, Approach::Nb, Approach::Sb];

    /// Unit vector of travel.
    pub fn direction(self) -> (f64, f64) {
        match self {
            Approach::Eb => (1.0, 0.0),
            Approach::Wb => (-1.0, 0.0),
            Approach::Nb => (0.0, 1.0),
            Approach::Sb => (0.0, -1.0),
        }
    }

    /// Unit vector pointing to the right of travel.
    pub fn right(self) -> (f64, f64) {
        let (dx, dy) = self.direction();
        (dy, -dx)
    }

    /// Direction of travel after turning left.
    pub fn after_left(self) -> Approach {
        match self {
            Approach::Eb => Approach::Nb,
            Approach::Nb => Approach::Wb,
            Approach::Wb => Approach::Sb,
            Approach::Sb => Approach::Eb,
        }
    }

    pub fn after_right(self) -> Approach {
        match self {
            Approach::Eb => Approach::Sb,
            Approach::Sb => Approach::Wb,
            Approach::Wb => Approach::Nb,
            Approach::Nb => Approach::Eb,
        }
    }

    pub fn through_phase(self) -> PhaseId {
        match self {
            Approach::Eb => 2,
            Approach::Wb => 6,
            Approach::Nb => 8,
            Approach::Sb => 4,
        }
    }

    pub fn left_phase(self) -> PhaseId {
        match self {
            Approach::Eb => 5,
            Approach::Wb => 1,
            Approach::Nb => 3,
            Approach::Sb => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::Eb => "eb",
            Approach::Wb => "wb",
            Approach::Nb => "nb",
            Approach::Sb => "sb",
        }
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Left,
    Through,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Movement {
    pub approach: Approach,
    pub turn: Turn,
}

impl Movement {
    pub fn class(self) -> MovementClass {
        match self.turn {
            Turn::Through => MovementClass::Through,
            Turn::Left | Turn::Right => MovementClass::Turning,
        }
    }

    pub fn phase(self) -> PhaseId {
        match self.turn {
            Turn::Left => self.approach.left_phase(),
            Turn::Through | Turn::Right => self.approach.through_phase(),
        }
    }

    pub fn all() -> impl Iterator<Item = Movement> {
        Approach::ALL.into_iter().flat_map(|approach| {
            [Turn::Left, Turn::Through, Turn::Right]
                .into_iter()
                .map(move |turn| Movement { approach, turn })
        })
    }
}

pub type LaneId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaneKind {
    Through,
    TurnApproach,
    Connector,
    AddLane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeLink {
    pub target: LaneId,
    /// Position on the target lane where merging vehicles enter.
    pub target_pos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub name: String,
    pub kind: LaneKind,
    pub length: f64,
    pub origin: (f64, f64),
    pub heading: (f64, f64),
    /// Stop bar position along the lane, if signal-controlled.
    pub stop_bar: Option<f64>,
    pub phase: Option<PhaseId>,
    /// Unconditional continuation at the lane end.
    pub next: Option<LaneId>,
    /// Gap-accepting merge at the lane end.
    pub merge: Option<MergeLink>,
}

impl Lane {
    pub fn point_at(&self, pos: f64) -> (f64, f64) {
        (
            self.origin.0 + pos * self.heading.0,
            self.origin.1 + pos * self.heading.1,
        )
    }

    pub fn end_point(&self) -> (f64, f64) {
        self.point_at(self.length)
    }

    /// True when `pos` is still upstream of this lane's stop bar.
    pub fn upstream_of_bar(&self, pos: f64) -> bool {
        self.stop_bar.is_some_and(|bar| pos <= bar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproachLanes {
    pub left_lanes: u32,
    pub through_lanes: u32,
    pub right_lanes: u32,
}

impl Default for ApproachLanes {
    fn default() -> Self {
        ApproachLanes {
            left_lanes: 1,
            through_lanes: 1,
            right_lanes: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachLaneMap {
    pub eb: ApproachLanes,
    pub wb: ApproachLanes,
    pub nb: ApproachLanes,
    pub sb: ApproachLanes,
}

impl ApproachLaneMap {
    pub fn get(&self, a: Approach) -> ApproachLanes {
        match a {
            Approach::Eb => self.eb,
            Approach::Wb => self.wb,
            Approach::Nb => self.nb,
            Approach::Sb => self.sb,
        }
    }
}

impl Default for ApproachLaneMap {
    fn default() -> Self {
        let main = ApproachLanes {
            through_lanes: 2,
            ..ApproachLanes::default()
        };
        ApproachLaneMap {
            eb: main,
            wb: main,
            nb: ApproachLanes::default(),
            sb: ApproachLanes::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub lane_width_m: f64,
    pub approach_length_m: f64,
    pub exit_length_m: f64,
    /// Distance from the centre to each stop bar.
    pub half_width_m: f64,
    /// Length of the add lane carrying left-turners before they merge.
    pub left_merge_m: f64,
    pub right_merge_m: f64,
    pub approaches: ApproachLaneMap,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            lane_width_m: 3.5,
            approach_length_m: 250.0,
            exit_length_m: 200.0,
            half_width_m: 12.0,
            left_merge_m: 60.0,
            right_merge_m: 80.0,
            approaches: ApproachLaneMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub lanes: Vec<Lane>,
    /// Spawn lanes per movement, indexed by [`Network::movement_index`].
    pub entries: Vec<Vec<LaneId>>,
    pub half_width_m: f64,
    pub lane_width_m: f64,
}

impl Network {
    pub fn movement_index(m: Movement) -> usize {
        let a = Approach::ALL.iter().position(|&x| x == m.approach).unwrap();
        let t = match m.turn {
            Turn::Left => 0,
            Turn::Through => 1,
            Turn::Right => 2,
        };
        a * 3 + t
    }

    pub fn entry_lanes(&self, m: Movement) -> &[LaneId] {
        &self.entries[Self::movement_index(m)]
    }

    pub fn build(cfg: &NetworkConfig) -> Result<Network, NetworkError> {
        for (name, v) in [
            ("lane_width_m", cfg.lane_width_m),
            ("approach_length_m", cfg.approach_length_m),
            ("exit_length_m", cfg.exit_length_m),
            ("half_width_m", cfg.half_width_m),
            ("left_merge_m", cfg.left_merge_m),
            ("right_merge_m", cfg.right_merge_m),
        ] {
            if !(v > 0.0) {
                return Err(NetworkError::NonPositive(name));
            }
        }
        for merge in [cfg.left_merge_m, cfg.right_merge_m] {
            if merge >= cfg.exit_length_m {
                return Err(NetworkError::MergeBeyondExit {
                    merge,
                    exit: cfg.exit_length_m,
                });
            }
        }
        for a in Approach::ALL {
            let l = cfg.approaches.get(a);
            if l.through_lanes == 0 {
                return Err(NetworkError::NoThroughLane(a));
            }
            for (what, count) in [("left", l.left_lanes), ("right", l.right_lanes)] {
                if count > 1 {
                    return Err(NetworkError::TooManyTurnLanes {
                        approach: a,
                        what,
                        count,
                    });
                }
            }
        }

        let w = cfg.lane_width_m;
        let h = cfg.half_width_m;
        let l_app = cfg.approach_length_m;
        // lateral offset of lane slot `k` (0 = next to the centre line) for travel direction `a`
        let lateral = |a: Approach, k: f64| {
            let (rx, ry) = a.right();
            ((k + 0.5) * w * rx, (k + 0.5) * w * ry)
        };
        // point at signed distance `s` along direction `a` from the centre, in slot `k`
        let point = |a: Approach, s: f64, k: f64| {
            let (dx, dy) = a.direction();
            let (ox, oy) = lateral(a, k);
            (s * dx + ox, s * dy + oy)
        };

        let mut lanes: Vec<Lane> = Vec::new();
        let mut entries = vec![Vec::new(); 12];
        let mut through_ids: Vec<Vec<LaneId>> = Vec::new();

        for a in Approach::ALL {
            let l = cfg.approaches.get(a);
            let mut ids = Vec::new();
            for i in 0..l.through_lanes {
                let k = (l.left_lanes + i) as f64;
                let id = lanes.len();
                lanes.push(Lane {
                    id,
                    name: format!("{a}-through-{i}"),
                    kind: LaneKind::Through,
                    length: l_app + 2.0 * h + cfg.exit_length_m,
                    origin: point(a, -(h + l_app), k),
                    heading: a.direction(),
                    stop_bar: Some(l_app),
                    phase: Some(a.through_phase()),
                    next: None,
                    merge: None,
                });
                ids.push(id);
            }
            entries[Network::movement_index(Movement {
                approach: a,
                turn: Turn::Through,
            })] = ids.clone();
            through_ids.push(ids);
        }

        for a in Approach::ALL {
            let l = cfg.approaches.get(a);
            for turn in [Turn::Left, Turn::Right] {
                let present = match turn {
                    Turn::Left => l.left_lanes,
                    _ => l.right_lanes,
                };
                if present == 0 {
                    continue;
                }
                let (dest, merge_len) = match turn {
                    Turn::Left => (a.after_left(), cfg.left_merge_m),
                    _ => (a.after_right(), cfg.right_merge_m),
                };
                let dl = cfg.approaches.get(dest);
                let dest_index = Approach::ALL.iter().position(|&x| x == dest).unwrap();
                let dest_through = &through_ids[dest_index];
                let (target, add_slot) = match turn {
                    Turn::Left => (dest_through[0], dl.left_lanes as f64 - 1.0),
                    _ => (
                        *dest_through.last().unwrap(),
                        (dl.left_lanes + dl.through_lanes) as f64,
                    ),
                };
                let approach_slot = match turn {
                    Turn::Left => 0.0,
                    _ => (l.left_lanes + l.through_lanes) as f64,
                };
                let phase = Movement { approach: a, turn }.phase();
                let tag = match turn {
                    Turn::Left => "left",
                    _ => "right",
                };

                let approach_id = lanes.len();
                let connector_id = approach_id + 1;
                let add_id = approach_id + 2;
                let bar_point = point(a, -h, approach_slot);
                let add_start = point(dest, h, add_slot);
                let chord = (add_start.0 - bar_point.0, add_start.1 - bar_point.1);
                let chord_len = (chord.0 * chord.0 + chord.1 * chord.1).sqrt();

                lanes.push(Lane {
                    id: approach_id,
                    name: format!("{a}-{tag}-approach"),
                    kind: LaneKind::TurnApproach,
                    length: l_app,
                    origin: point(a, -(h + l_app), approach_slot),
                    heading: a.direction(),
                    stop_bar: Some(l_app),
                    phase: Some(phase),
                    next: Some(connector_id),
                    merge: None,
                });
                lanes.push(Lane {
                    id: connector_id,
                    name: format!("{a}-{tag}-connector"),
                    kind: LaneKind::Connector,
                    length: chord_len,
                    origin: bar_point,
                    heading: (chord.0 / chord_len, chord.1 / chord_len),
                    stop_bar: None,
                    phase: None,
                    next: Some(add_id),
                    merge: None,
                });
                lanes.push(Lane {
                    id: add_id,
                    name: format!("{a}-{tag}-add"),
                    kind: LaneKind::AddLane,
                    length: merge_len,
                    origin: add_start,
                    heading: dest.direction(),
                    stop_bar: None,
                    phase: None,
                    next: None,
                    merge: Some(MergeLink {
                        target,
                        target_pos: l_app + 2.0 * h + merge_len,
                    }),
                });
                entries[Network::movement_index(Movement { approach: a, turn })] =
                    vec![approach_id];
            }
        }

        let net = Network {
            lanes,
            entries,
            half_width_m: h,
            lane_width_m: w,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let n = self.lanes.len();
        for lane in &self.lanes {
            let err = |detail: String| NetworkError::Lane {
                lane: lane.id,
                detail,
            };
            if !(lane.length > 0.0) {
                return Err(err(format!("non-positive length {}", lane.length)));
            }
            if let Some(bar) = lane.stop_bar {
                if !(0.0..=lane.length).contains(&bar) {
                    return Err(err(format!("stop bar {bar} outside length {}", lane.length)));
                }
            }
            if let Some(next) = lane.next {
                if next >= n {
                    return Err(err(format!("next lane {next} does not exist")));
                }
            }
            if let Some(m) = lane.merge {
                let target = self
                    .lanes
                    .get(m.target)
                    .ok_or_else(|| err(format!("merge target {} does not exist", m.target)))?;
                if m.target == lane.id || !(0.0..target.length).contains(&m.target_pos) {
                    return Err(err(format!(
                        "merge position {} invalid on lane {}",
                        m.target_pos, m.target
                    )));
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box `(min_x, min_y, max_x, max_y)` of all lanes.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for lane in &self.lanes {
            for (x, y) in [lane.origin, lane.end_point()] {
                b.0 = b.0.min(x);
                b.1 = b.1.min(y);
                b.2 = b.2.max(x);
                b.3 = b.3.max(y);
            }
        }
        b
    }
}
