//! Time-stepped simulation of the intersection.
//!
//! Each step reads one snapshot of the world, computes every vehicle's
//! acceleration from it, and then integrates all vehicles at once
//! (semi-implicit Euler), so the result never depends on vehicle order.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, DriverModel, ScenarioConfig, SimSetup};
use crate::kernel::{
    safety_ovm_acceleration, select_model, wiedemann74_acceleration, LeaderRelation, ModelChoice,
    MovementClass, KMH_PER_MPS,
};
use crate::network::{LaneId, Movement};
use crate::safety::{car_following_ttc, observe, ConflictRecord, FollowerView};
use crate::scenario::ScenarioSpec;
use crate::signal::{PhaseId, SignalState};

/// How far ahead (m) leaders are searched along lane continuations.
const LOOKAHEAD_M: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YellowDecision {
    #[default]
    Undecided,
    Stop,
    /// Too close to stop comfortably; clears the bar even if the signal turns red.
    Go,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u64,
    pub lane: LaneId,
    /// Front bumper, meters from the lane origin.
    pub pos: f64,
    pub v: f64,
    pub a: f64,
    pub length: f64,
    pub movement: Movement,
    pub class: MovementClass,
    pub nema_phase: PhaseId,
    pub desired_v: f64,
    pub driver_factor: f64,
    pub spawn_t: f64,
    pub yellow: YellowDecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObstacleKind {
    Vehicle(u64),
    StopBar,
    LaneEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub kind: ObstacleKind,
    pub rel: LeaderRelation,
    /// Index into the vehicle list for vehicle obstacles.
    index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapEvent {
    pub t: f64,
    pub follower_id: u64,
    pub leader_id: u64,
    pub lane: LaneId,
    pub depth_m: f64,
}

/// Engine event counters for the whole run (warm-up included).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub spawned: u64,
    pub despawned: u64,
    pub spawned_measured: u64,
    pub deferred_spawn_steps: u64,
    pub emergency_brakes: u64,
    pub safety_ovm_steps: u64,
    pub default_steps: u64,
    pub merges: u64,
    pub merge_holds: u64,
    pub bar_stops: u64,
    pub red_crossings_committed: u64,
    pub red_crossings_uncommitted: u64,
    pub speed_violations: u64,
    pub conservation_violations: u64,
    pub max_in_network: u64,
}

/// One car-following sample as seen by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfSample {
    pub step: u64,
    pub t: f64,
    pub follower_id: u64,
    pub leader_id: u64,
    pub ttc: f64,
    /// Follower speed, km/hr.
    pub v_kmh: f64,
    pub movement: MovementClass,
}

/// Trajectory row of one vehicle at one measured step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub vehicle_id: u64,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub lane: LaneId,
    pub movement: MovementClass,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub trajectories: bool,
    pub car_following: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub label: String,
    pub seed: u64,
    pub driver_model: DriverModel,
    pub dt: f64,
    pub warmup_steps: u64,
    pub measured_steps: u64,
    pub in_network_end: u64,
    pub counters: Counters,
    pub overlaps: Vec<OverlapEvent>,
    pub conflicts: Vec<ConflictRecord>,
    pub car_following: Vec<CfSample>,
    pub trajectories: Vec<TrajectoryRow>,
}

impl RunLog {
    /// Vehicles that entered during the measured horizon.
    pub fn total_vehicles(&self) -> u64 {
        self.counters.spawned_measured
    }
}

#[derive(Debug, Clone)]
struct Pending {
    desired_v: f64,
    driver_factor: f64,
}

#[derive(Debug, Clone)]
struct Arrivals {
    rate: f64,
    next_t: f64,
    queue: VecDeque<Pending>,
}

pub struct World {
    setup: SimSetup,
    step: u64,
    vehicles: Vec<VehicleState>,
    next_id: u64,
    arrivals: Vec<Arrivals>,
    rng_arrivals: ChaCha8Rng,
    rng_speeds: ChaCha8Rng,
    rng_drivers: ChaCha8Rng,
    /// Vehicle indices per lane, sorted by position.
    lane_index: Vec<Vec<usize>>,
    /// Rank of each vehicle within its lane index.
    rank: Vec<usize>,
    states: [SignalState; 9],
    pub counters: Counters,
    pub overlaps: Vec<OverlapEvent>,
}

fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(purpose);
    r
}

fn draw_exp(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate > 0.0 {
        Exp::new(rate).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    }
}

impl World {
    pub fn new(setup: SimSetup, seed: u64) -> World {
        let mut rng_arrivals = stream(seed, 1);
        let arrivals = setup
            .demand
            .flows
            .iter()
            .map(|&(_, flow)| {
                let rate = flow / 3600.0;
                Arrivals {
                    rate,
                    next_t: draw_exp(&mut rng_arrivals, rate),
                    queue: VecDeque::new(),
                }
            })
            .collect();
        let lanes = setup.network.lanes.len();
        let mut w = World {
            setup,
            step: 0,
            vehicles: Vec::new(),
            next_id: 1,
            arrivals,
            rng_arrivals,
            rng_speeds: stream(seed, 2),
            rng_drivers: stream(seed, 3),
            lane_index: vec![Vec::new(); lanes],
            rank: Vec::new(),
            states: [SignalState::Green; 9],
            counters: Counters::default(),
            overlaps: Vec::new(),
        };
        w.refresh_signals();
        w
    }

    pub fn setup(&self) -> &SimSetup {
        &self.setup
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Simulation time of the current step.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.setup.dt
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn signal(&self, phase: PhaseId) -> SignalState {
        self.states[phase as usize]
    }

    fn refresh_signals(&mut self) {
        let t = self.time();
        for p in 1..=8u8 {
            if let Ok(s) = self.setup.plan.signal_state(t, p) {
                self.states[p as usize] = s;
            }
        }
    }

    fn rebuild_index(&mut self) {
        for l in &mut self.lane_index {
            l.clear();
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            self.lane_index[v.lane].push(i);
        }
        let vehicles = &self.vehicles;
        self.rank.resize(vehicles.len(), 0);
        for l in &mut self.lane_index {
            l.sort_by(|&a, &b| {
                vehicles[a]
                    .pos
                    .total_cmp(&vehicles[b].pos)
                    .then(vehicles[a].id.cmp(&vehicles[b].id))
            });
            for (r, &i) in l.iter().enumerate() {
                self.rank[i] = r;
            }
        }
    }

    /// Places a vehicle directly, bypassing demand. Returns its id.
    pub fn insert_vehicle(
        &mut self,
        movement: Movement,
        lane: LaneId,
        pos: f64,
        v: f64,
        desired_v: f64,
        driver_factor: f64,
    ) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.vehicles.push(VehicleState {
            id,
            lane,
            pos,
            v,
            a: 0.0,
            length: self.setup.vehicle_length_m,
            movement,
            class: movement.class(),
            nema_phase: movement.phase(),
            desired_v,
            driver_factor,
            spawn_t: self.time(),
            yellow: YellowDecision::Undecided,
        });
        self.counters.spawned += 1;
        self.rebuild_index();
        id
    }

    fn draw_desired_speed(&mut self) -> f64 {
        let d = self.setup.demand.speed;
        let ln = LogNormal::new(d.mu, d.sigma).expect("valid lognormal");
        let mut kmh = ln.sample(&mut self.rng_speeds);
        while !(d.min_kmh..=d.max_kmh).contains(&kmh) {
            kmh = ln.sample(&mut self.rng_speeds);
        }
        if let Some(cap) = d.cap_kmh {
            kmh = kmh.min(cap);
        }
        kmh / KMH_PER_MPS
    }

    fn draw_driver_factor(&mut self) -> f64 {
        let d = &self.setup.driver;
        if d.factor_sd == 0.0 {
            return d.factor_mean.clamp(0.0, 1.0);
        }
        let n = Normal::new(d.factor_mean, d.factor_sd).expect("valid driver factor");
        n.sample(&mut self.rng_drivers).clamp(0.0, 1.0)
    }

    /// Generates arrivals due by the current time and places queued vehicles
    /// whose entry lane has room. Blocked vehicles wait in the queue.
    pub fn spawn_vehicles(&mut self) {
        let t = self.time();
        for m in 0..self.arrivals.len() {
            while self.arrivals[m].next_t <= t + 1e-9 {
                let desired_v = self.draw_desired_speed();
                let driver_factor = self.draw_driver_factor();
                let a = &mut self.arrivals[m];
                a.queue.push_back(Pending {
                    desired_v,
                    driver_factor,
                });
                let gap = draw_exp(&mut self.rng_arrivals, a.rate);
                a.next_t += gap;
            }
        }
        let measured = self.step >= self.setup.warmup_steps();
        for m in 0..self.arrivals.len() {
            let Some(p) = self.arrivals[m].queue.front().cloned() else {
                continue;
            };
            let movement = self.setup.demand.flows[m].0;
            let len = self.setup.vehicle_length_m;
            let mut best: Option<(LaneId, f64, f64)> = None;
            for &lane in self.setup.network.entry_lanes(movement) {
                let (gap, lead_v) = match self.lane_index[lane].first() {
                    Some(&i) => {
                        let l = &self.vehicles[i];
                        (l.pos - l.length - len, l.v)
                    }
                    None => (f64::INFINITY, p.desired_v),
                };
                if best.is_none_or(|b| gap > b.1) {
                    best = Some((lane, gap, lead_v));
                }
            }
            let Some((lane, gap, lead_v)) = best else {
                continue;
            };
            let dm = &self.setup.demand;
            let v0 = if gap.is_finite() {
                p.desired_v
                    .min(lead_v + 0.1 * (gap - dm.entry_min_gap_m))
                    .max(0.0)
            } else {
                p.desired_v
            };
            if gap < dm.entry_min_gap_m.max(dm.entry_headway_s * v0) {
                self.counters.deferred_spawn_steps += 1;
                continue;
            }
            self.arrivals[m].queue.pop_front();
            let id = self.next_id;
            self.next_id += 1;
            self.vehicles.push(VehicleState {
                id,
                lane,
                pos: len,
                v: v0,
                a: 0.0,
                length: len,
                movement,
                class: movement.class(),
                nema_phase: movement.phase(),
                desired_v: p.desired_v,
                driver_factor: p.driver_factor,
                spawn_t: t,
                yellow: YellowDecision::Undecided,
            });
            self.counters.spawned += 1;
            if measured {
                self.counters.spawned_measured += 1;
            }
            self.rebuild_index();
        }
    }

    /// Vehicles still waiting for room at their entry lane.
    pub fn queued_arrivals(&self) -> usize {
        self.arrivals.iter().map(|a| a.queue.len()).sum()
    }

    /// Nearest vehicle ahead in the same lane.
    pub fn vehicle_leader(&self, i: usize) -> Option<(usize, LeaderRelation)> {
        let me = &self.vehicles[i];
        let j = *self.lane_index[me.lane].get(self.rank[i] + 1)?;
        let l = &self.vehicles[j];
        Some((
            j,
            LeaderRelation {
                gap: (l.pos - l.length - me.pos).max(0.0),
                delta_v: me.v - l.v,
                same_lane: true,
            },
        ))
    }

    /// Vehicle ahead through lane continuations, after the own lane is empty ahead.
    fn continuation_leader(&self, i: usize) -> Option<(usize, LeaderRelation)> {
        let me = &self.vehicles[i];
        let lanes = &self.setup.network.lanes;
        let mut lane = &lanes[me.lane];
        let mut dist = lane.length - me.pos;
        while dist < LOOKAHEAD_M {
            let next = lane.next?;
            if let Some(&j) = self.lane_index[next].first() {
                let l = &self.vehicles[j];
                return Some((
                    j,
                    LeaderRelation {
                        gap: (dist + l.pos - l.length).max(0.0),
                        delta_v: me.v - l.v,
                        same_lane: false,
                    },
                ));
            }
            lane = &lanes[next];
            dist += lane.length;
        }
        None
    }

    /// Position a vehicle on an add lane would occupy on its merge target.
    fn merge_projection(&self, i: usize) -> Option<(LaneId, f64)> {
        let me = &self.vehicles[i];
        let lane = &self.setup.network.lanes[me.lane];
        let m = lane.merge?;
        Some((m.target, m.target_pos - lane.length + me.pos))
    }

    /// Target-lane neighbours `(behind, ahead)` of a projected position.
    fn target_neighbours(&self, target: LaneId, e: f64) -> (Option<usize>, Option<usize>) {
        let idx = &self.lane_index[target];
        let k = idx.partition_point(|&j| self.vehicles[j].pos <= e);
        (
            k.checked_sub(1).map(|r| idx[r]),
            idx.get(k).copied(),
        )
    }

    fn merge_clear(&self, i: usize) -> bool {
        let Some((target, e)) = self.merge_projection(i) else {
            return false;
        };
        let me = &self.vehicles[i];
        let s = &self.setup;
        let (behind, ahead) = self.target_neighbours(target, e);
        if let Some(j) = ahead {
            let l = &self.vehicles[j];
            if l.pos - l.length - e < s.merge_min_gap_m.max(s.merge_headway_s * me.v) {
                return false;
            }
        }
        if let Some(j) = behind {
            let f = &self.vehicles[j];
            if e - me.length - f.pos < s.merge_min_gap_m.max(s.merge_headway_s * f.v) {
                return false;
            }
        }
        true
    }

    fn stop_required(&self, i: usize, decision: YellowDecision) -> bool {
        let me = &self.vehicles[i];
        let lane = &self.setup.network.lanes[me.lane];
        let (Some(bar), Some(phase)) = (lane.stop_bar, lane.phase) else {
            return false;
        };
        if me.pos > bar {
            return false;
        }
        match self.states[phase as usize] {
            SignalState::Green => false,
            SignalState::Yellow | SignalState::Red => decision != YellowDecision::Go,
        }
    }

    fn yellow_decision(&self, i: usize) -> YellowDecision {
        let me = &self.vehicles[i];
        let lane = &self.setup.network.lanes[me.lane];
        let (Some(bar), Some(phase)) = (lane.stop_bar, lane.phase) else {
            return YellowDecision::Undecided;
        };
        match self.states[phase as usize] {
            SignalState::Green => YellowDecision::Undecided,
            _ if me.pos > bar => me.yellow,
            SignalState::Yellow if me.yellow == YellowDecision::Undecided => {
                let d = bar - me.pos;
                let required = if d > 1e-6 {
                    me.v * me.v / (2.0 * d)
                } else if me.v > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                if required > self.setup.yellow_stop_decel {
                    YellowDecision::Go
                } else {
                    YellowDecision::Stop
                }
            }
            SignalState::Yellow => me.yellow,
            SignalState::Red if me.yellow == YellowDecision::Go => YellowDecision::Go,
            SignalState::Red => YellowDecision::Stop,
        }
    }

    /// All obstacles for vehicle `i`; the binding one has the smallest gap.
    fn obstacles(&self, i: usize, decision: YellowDecision, merge_ok: bool) -> Vec<Obstacle> {
        let me = &self.vehicles[i];
        let lane = &self.setup.network.lanes[me.lane];
        let mut out = Vec::with_capacity(3);
        let veh = |(j, rel): (usize, LeaderRelation)| Obstacle {
            kind: ObstacleKind::Vehicle(self.vehicles[j].id),
            rel,
            index: Some(j),
        };
        match self.vehicle_leader(i) {
            Some(l) => out.push(veh(l)),
            None => {
                if let Some(l) = self.continuation_leader(i) {
                    out.push(veh(l));
                }
            }
        }
        if self.stop_required(i, decision) {
            out.push(Obstacle {
                kind: ObstacleKind::StopBar,
                rel: LeaderRelation {
                    gap: (lane.stop_bar.unwrap_or(lane.length) - me.pos).max(0.0),
                    delta_v: me.v,
                    same_lane: true,
                },
                index: None,
            });
        }
        if lane.merge.is_some() {
            if merge_ok {
                if let Some((target, e)) = self.merge_projection(i) {
                    if let (_, Some(j)) = self.target_neighbours(target, e) {
                        let l = &self.vehicles[j];
                        out.push(veh((
                            j,
                            LeaderRelation {
                                gap: (l.pos - l.length - e).max(0.0),
                                delta_v: me.v - l.v,
                                same_lane: false,
                            },
                        )));
                    }
                }
            } else {
                out.push(Obstacle {
                    kind: ObstacleKind::LaneEnd,
                    rel: LeaderRelation {
                        gap: (lane.length - me.pos).max(0.0),
                        delta_v: me.v,
                        same_lane: true,
                    },
                    index: None,
                });
            }
        }
        out
    }

    fn binding(obstacles: &[Obstacle]) -> Option<Obstacle> {
        obstacles
            .iter()
            .copied()
            .min_by(|a, b| a.rel.gap.total_cmp(&b.rel.gap))
    }

    /// The relation that drives vehicle `i` this step: the closest of its
    /// vehicle leader, a virtual stopped leader at the stop bar (red, or
    /// yellow without a commitment to go), or the lane end of a blocked merge.
    pub fn leader_query(&self, i: usize) -> Option<LeaderRelation> {
        let decision = self.yellow_decision(i);
        let merge_ok = self.merge_clear(i);
        Self::binding(&self.obstacles(i, decision, merge_ok)).map(|o| o.rel)
    }

    /// Followers with a same-lane vehicle leader in the current snapshot.
    pub fn follower_views(&self) -> Vec<FollowerView> {
        let t = self.time();
        let lanes = &self.setup.network.lanes;
        (0..self.vehicles.len())
            .filter_map(|i| {
                let (j, rel) = self.vehicle_leader(i)?;
                let me = &self.vehicles[i];
                let lane = &lanes[me.lane];
                let (x, y) = lane.point_at(me.pos);
                Some(FollowerView {
                    t,
                    step: self.step,
                    follower_id: me.id,
                    leader_id: self.vehicles[j].id,
                    x,
                    y,
                    v: me.v,
                    rel,
                    movement: me.class,
                    lane: me.lane,
                    beyond_stop_bar: lane.stop_bar.is_none_or(|b| me.pos > b),
                })
            })
            .collect()
    }

    pub fn trajectory_rows(&self) -> Vec<TrajectoryRow> {
        let t = self.time();
        self.vehicles
            .iter()
            .map(|v| {
                let (x, y) = self.setup.network.lanes[v.lane].point_at(v.pos);
                TrajectoryRow {
                    t,
                    vehicle_id: v.id,
                    x,
                    y,
                    speed: v.v,
                    lane: v.lane,
                    movement: v.class,
                }
            })
            .collect()
    }

    fn acceleration(&mut self, i: usize, obstacle: Option<&Obstacle>) -> f64 {
        let s = &self.setup;
        let me = &self.vehicles[i];
        if let Some(o) = obstacle {
            if o.rel.gap < s.emergency_gap_m && me.v > 0.0 {
                self.counters.emergency_brakes += 1;
                return s.bounds.min;
            }
        }
        let vehicle_rel = obstacle.filter(|o| o.index.is_some()).map(|o| o.rel);
        let choice = match s.driver_model {
            DriverModel::Baseline => ModelChoice::Default,
            DriverModel::SafetyOvm => select_model(me.v, vehicle_rel.as_ref()),
        };
        match choice {
            ModelChoice::SafetyOvm => {
                self.counters.safety_ovm_steps += 1;
                let rel = vehicle_rel.expect("selected only with a leader");
                let p = s.params(me.class);
                let tau = p.tau_seconds(s.tau_unit, s.dt);
                let ttc = rel.gap / rel.delta_v;
                safety_ovm_acceleration(
                    ttc,
                    me.v * KMH_PER_MPS,
                    p,
                    tau,
                    s.ftable(me.class),
                    &s.bounds,
                )
                .expect("validated parameters and non-negative ttc")
            }
            ModelChoice::Default => {
                self.counters.default_steps += 1;
                wiedemann74_acceleration(
                    me.v,
                    me.desired_v,
                    obstacle.map(|o| &o.rel),
                    me.driver_factor,
                    &s.driver.wiedemann,
                    &s.bounds,
                )
            }
        }
    }

    /// Advances the world by one time step.
    pub fn step(&mut self) {
        let n = self.vehicles.len();
        let dt = self.setup.dt;
        let mut accel = Vec::with_capacity(n);
        let mut decisions = Vec::with_capacity(n);
        let mut merge_ok = Vec::with_capacity(n);
        let mut stopping = Vec::with_capacity(n);
        for i in 0..n {
            let decision = self.yellow_decision(i);
            let clear = self.merge_clear(i);
            let obs = self.obstacles(i, decision, clear);
            let binding = Self::binding(&obs);
            accel.push(self.acceleration(i, binding.as_ref()));
            stopping.push(self.stop_required(i, decision));
            decisions.push(decision);
            merge_ok.push(clear);
        }

        let t_next = (self.step + 1) as f64 * dt;
        let lanes = &self.setup.network.lanes;
        let mut keep = vec![true; n];
        for i in 0..n {
            let veh = &mut self.vehicles[i];
            veh.a = accel[i];
            veh.yellow = decisions[i];
            let v_new = (veh.v + accel[i] * dt).clamp(0.0, veh.desired_v);
            let mut pos = veh.pos + v_new * dt;
            let mut v = v_new;
            let lane = &lanes[veh.lane];
            if let (Some(bar), Some(phase)) = (lane.stop_bar, lane.phase) {
                if veh.pos <= bar && pos > bar {
                    if stopping[i] {
                        pos = bar;
                        v = 0.0;
                        self.counters.bar_stops += 1;
                    } else if self.states[phase as usize] == SignalState::Red {
                        if veh.yellow == YellowDecision::Go {
                            self.counters.red_crossings_committed += 1;
                        } else {
                            self.counters.red_crossings_uncommitted += 1;
                        }
                    }
                }
            }
            let mut lane_id = veh.lane;
            loop {
                let l = &lanes[lane_id];
                if pos <= l.length {
                    break;
                }
                if let Some(next) = l.next {
                    pos -= l.length;
                    lane_id = next;
                } else if let Some(m) = l.merge {
                    if merge_ok[i] {
                        pos = m.target_pos + (pos - l.length);
                        lane_id = m.target;
                        self.counters.merges += 1;
                    } else {
                        pos = l.length;
                        v = 0.0;
                        self.counters.merge_holds += 1;
                    }
                    break;
                } else {
                    keep[i] = false;
                    break;
                }
            }
            if v > veh.desired_v + 1e-12 {
                self.counters.speed_violations += 1;
            }
            veh.v = v;
            veh.pos = pos;
            if lane_id != veh.lane {
                veh.lane = lane_id;
                veh.yellow = YellowDecision::Undecided;
            }
        }
        let before = self.vehicles.len() as u64;
        let mut k = 0;
        self.vehicles.retain(|_| {
            let r = keep[k];
            k += 1;
            r
        });
        self.counters.despawned += before - self.vehicles.len() as u64;
        self.rebuild_index();
        self.resolve_overlaps(t_next);

        self.step += 1;
        self.refresh_signals();
        let c = &mut self.counters;
        if c.spawned != c.despawned + self.vehicles.len() as u64 {
            c.conservation_violations += 1;
        }
        c.max_in_network = c.max_in_network.max(self.vehicles.len() as u64);
    }

    fn resolve_overlaps(&mut self, t: f64) {
        let mut moved = false;
        for lane in 0..self.lane_index.len() {
            let idx = &self.lane_index[lane];
            for r in (0..idx.len().saturating_sub(1)).rev() {
                let (f, l) = (idx[r], idx[r + 1]);
                let rear = self.vehicles[l].pos - self.vehicles[l].length;
                let depth = self.vehicles[f].pos - rear;
                if depth > 1e-9 {
                    self.overlaps.push(OverlapEvent {
                        t,
                        follower_id: self.vehicles[f].id,
                        leader_id: self.vehicles[l].id,
                        lane,
                        depth_m: depth,
                    });
                    let lv = self.vehicles[l].v;
                    let fv = &mut self.vehicles[f];
                    fv.pos = rear;
                    fv.v = fv.v.min(lv);
                    moved = true;
                }
            }
        }
        if moved {
            self.rebuild_index();
        }
    }

    pub fn in_network(&self) -> u64 {
        self.vehicles.len() as u64
    }
}

/// Runs warm-up plus the measured horizon and collects the log.
pub fn run(setup: &SimSetup, seed: u64, opts: RunOptions) -> RunLog {
    let mut world = World::new(setup.clone(), seed);
    let warmup = setup.warmup_steps();
    let measured = setup.measured_steps();
    let record_ttc = setup.safety.record_ttc_s;
    let mut conflicts = Vec::new();
    let mut car_following = Vec::new();
    let mut trajectories = Vec::new();
    for n in 0..warmup + measured {
        world.spawn_vehicles();
        if n >= warmup {
            let views = world.follower_views();
            conflicts.extend(observe(&views, record_ttc));
            if opts.car_following {
                car_following.extend(views.iter().filter_map(|fv| {
                    let ttc = car_following_ttc(fv.v, &fv.rel)?;
                    Some(CfSample {
                        step: fv.step,
                        t: fv.t,
                        follower_id: fv.follower_id,
                        leader_id: fv.leader_id,
                        ttc,
                        v_kmh: fv.v * KMH_PER_MPS,
                        movement: fv.movement,
                    })
                }));
            }
            if opts.trajectories {
                trajectories.extend(world.trajectory_rows());
            }
        }
        world.step();
    }
    RunLog {
        label: setup.spec.label(),
        seed,
        driver_model: setup.driver_model,
        dt: setup.dt,
        warmup_steps: warmup,
        measured_steps: measured,
        in_network_end: world.in_network(),
        counters: world.counters.clone(),
        overlaps: world.overlaps.clone(),
        conflicts,
        car_following,
        trajectories,
    }
}

/// Resolves and runs replication `k` of one scenario cell.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    spec: &ScenarioSpec,
    k: u32,
    opts: RunOptions,
) -> Result<RunLog, ConfigError> {
    let setup = cfg.resolve(spec)?;
    Ok(run(&setup, spec.replication_seed(k), opts))
}

/// Car-following samples grouped into episodes: one follower, one leader,
/// consecutive steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfEpisode {
    pub follower_id: u64,
    pub leader_id: u64,
    pub steps: Vec<u64>,
    pub ttc: Vec<f64>,
}

pub fn cf_episodes(samples: &[CfSample]) -> Vec<CfEpisode> {
    let mut sorted: Vec<&CfSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.follower_id.cmp(&b.follower_id).then(a.step.cmp(&b.step)));
    let mut out: Vec<CfEpisode> = Vec::new();
    for s in sorted {
        let extend = out.last().is_some_and(|e| {
            e.follower_id == s.follower_id
                && e.leader_id == s.leader_id
                && e.steps.last() == Some(&(s.step - 1))
        });
        if extend {
            let e = out.last_mut().unwrap();
            e.steps.push(s.step);
            e.ttc.push(s.ttc);
        } else {
            out.push(CfEpisode {
                follower_id: s.follower_id,
                leader_id: s.leader_id,
                steps: vec![s.step],
                ttc: vec![s.ttc],
            });
        }
    }
    out
}
