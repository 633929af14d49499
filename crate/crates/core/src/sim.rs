//! Four-approach intersection microsimulation.
//!
//! Each approach is a single lane measured by the distance `s` remaining to
//! its stop line. Vehicles spawn at `s = approach_length`, follow their
//! leader with constant-magnitude acceleration and braking, obey the robot's
//! effective permission at the stop line, then cross a box of length
//! `box_size` and retire once their tail has left it (`s <= -(box + length)`).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::gestures::{
    apply_delta, permission_delta, signal_target_pose, Approach, Pair, Permission, PermissionState,
    TrafficSignal,
};
use crate::kinematics::{clamp_pose, default_limits, interpolate, JointLimits, RobotPose};
use crate::rng::SplitMix64;
use crate::scenario::ScenarioConfig;

/// Vehicles slower than this before the stop line count as queued (m/s).
pub const QUEUE_SPEED: f64 = 0.1;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u64,
    pub approach: Approach,
    /// Distance to the stop line; negative inside the box.
    pub position: f64,
    pub speed: f64,
    pub spawn_time: f64,
    pub cross_complete_time: Option<f64>,
    /// Too close to brake when its approach last turned to Stop.
    pub committed: bool,
}

impl Vehicle {
    pub fn is_queued(&self) -> bool {
        self.speed < QUEUE_SPEED && self.position >= 0.0
    }
}

/// Permissions drivers actually obey, with the time each one took effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectivePermission {
    pub state: PermissionState,
    pub since: [f64; 4],
}

impl Default for EffectivePermission {
    fn default() -> Self {
        EffectivePermission {
            state: PermissionState::all_stop(),
            since: [0.0; 4],
        }
    }
}

/// Next effective permissions at time `now`.
///
/// Stop takes effect as soon as it is commanded. Go takes effect
/// `reaction_delay` seconds after the robot finished the gesture; until then
/// the previous effective value holds.
pub fn effective_permissions(
    prev: &EffectivePermission,
    commanded: &PermissionState,
    gesture_done_at: Option<f64>,
    now: f64,
    reaction_delay: f64,
) -> EffectivePermission {
    let mut next = *prev;
    for a in Approach::ALL {
        let i = a.index();
        match (prev.state.get(a), commanded.get(a)) {
            (Permission::Go, Permission::Stop) => {
                next.state.set(a, Permission::Stop);
                next.since[i] = now;
            }
            (Permission::Stop, Permission::Go) => {
                if let Some(done) = gesture_done_at {
                    let at = done + reaction_delay;
                    if now + TIME_EPS >= at {
                        next.state.set(a, Permission::Go);
                        next.since[i] = at;
                    }
                }
            }
            _ => {}
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ApproachStats {
    pub attempted: u64,
    pub blocked: u64,
    pub spawned: u64,
    pub crossed: u64,
    pub crossed_delay_sum: f64,
    pub max_queue: u64,
}

/// Counters for properties that must hold in every run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InvariantCounters {
    /// Non-committed vehicle crossed its stop line under effective Stop.
    pub stop_line_violations: u64,
    /// Committed vehicle crossed under effective Stop (allowed, logged).
    pub committed_crossings: u64,
    pub order_violations: u64,
    pub gap_violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ApproachMetrics {
    pub arrivals: u64,
    pub blocked: u64,
    pub crossed: u64,
    pub in_system: u64,
    pub mean_delay: f64,
    pub max_queue: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub approaches: [ApproachMetrics; 4],
    pub total: ApproachMetrics,
    pub conflicts: u64,
    pub commands: u64,
    pub clock: f64,
}

impl MetricsReport {
    pub fn approach(&self, a: Approach) -> &ApproachMetrics {
        &self.approaches[a.index()]
    }

    /// Fixed-column CSV: one row per approach, a total row and a conflicts row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("approach,arrivals,crossed,mean_delay_s,max_queue\n");
        let rows = Approach::ALL
            .iter()
            .map(|a| (a.name(), &self.approaches[a.index()]))
            .chain(std::iter::once(("total", &self.total)));
        for (name, m) in rows {
            let _ = writeln!(
                out,
                "{name},{},{},{:.6},{}",
                m.arrivals, m.crossed, m.mean_delay, m.max_queue
            );
        }
        let _ = writeln!(out, "conflicts,{},,,", self.conflicts);
        out
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: ScenarioConfig,
    steps: u64,
    rng: SplitMix64,
    lanes: [Vec<Vehicle>; 4],
    retired: Vec<Vehicle>,
    next_id: u64,
    limits: JointLimits,
    pose: RobotPose,
    target: RobotPose,
    commanded: PermissionState,
    effective: EffectivePermission,
    gesture_done_at: Option<f64>,
    current_signal: Option<TrafficSignal>,
    commands: u64,
    stats: [ApproachStats; 4],
    max_total_queue: u64,
    conflict_pairs: BTreeSet<(u64, u64)>,
    counters: InvariantCounters,
}

impl Simulation {
    /// `cfg` is expected to have passed [`ScenarioConfig::validate`].
    pub fn new(cfg: ScenarioConfig) -> Self {
        let mut limits = default_limits();
        limits.max_speed = cfg.joint_speed;
        Simulation {
            rng: SplitMix64::new(cfg.seed),
            cfg,
            steps: 0,
            lanes: Default::default(),
            retired: Vec::new(),
            next_id: 0,
            limits,
            pose: RobotPose::standing(),
            target: RobotPose::standing(),
            commanded: PermissionState::all_stop(),
            effective: EffectivePermission::default(),
            gesture_done_at: Some(0.0),
            current_signal: None,
            commands: 0,
            stats: Default::default(),
            max_total_queue: 0,
            conflict_pairs: BTreeSet::new(),
            counters: InvariantCounters::default(),
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn now(&self) -> f64 {
        self.steps as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.steps
    }

    pub fn is_finished(&self) -> bool {
        self.steps >= self.cfg.total_steps()
    }

    pub fn lane(&self, a: Approach) -> &[Vehicle] {
        &self.lanes[a.index()]
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.lanes.iter().flatten()
    }

    pub fn retired(&self) -> &[Vehicle] {
        &self.retired
    }

    pub fn pose(&self) -> &RobotPose {
        &self.pose
    }

    pub fn target_pose(&self) -> &RobotPose {
        &self.target
    }

    pub fn commanded(&self) -> &PermissionState {
        &self.commanded
    }

    pub fn effective(&self) -> &EffectivePermission {
        &self.effective
    }

    pub fn gesture_done_at(&self) -> Option<f64> {
        self.gesture_done_at
    }

    pub fn current_signal(&self) -> Option<TrafficSignal> {
        self.current_signal
    }

    pub fn counters(&self) -> &InvariantCounters {
        &self.counters
    }

    pub fn stats(&self, a: Approach) -> &ApproachStats {
        &self.stats[a.index()]
    }

    pub fn conflicts(&self) -> u64 {
        self.conflict_pairs.len() as u64
    }

    pub fn queue_lengths(&self) -> [u32; 4] {
        let mut q = [0u32; 4];
        for a in Approach::ALL {
            q[a.index()] = self.lanes[a.index()]
                .iter()
                .filter(|v| v.is_queued())
                .count() as u32;
        }
        q
    }

    /// Vehicles inside the box, or committed and still heading into it
    /// against an effective Stop.
    pub fn clearing_vehicles(&self) -> usize {
        self.vehicles()
            .filter(|v| {
                v.position < 0.0
                    || (v.committed && self.effective.state.get(v.approach) == Permission::Stop)
            })
            .count()
    }

    /// Replace the robot's target with `signal` and apply its permission
    /// delta, plus Go for `grant` when given.
    pub fn command(&mut self, signal: TrafficSignal, grant: Option<Pair>) {
        let now = self.now();
        let mut next = apply_delta(&self.commanded, &permission_delta(signal));
        if let Some(pair) = grant {
            next = next.with_grant(pair);
        }
        self.commanded = next;
        self.target = clamp_pose(&signal_target_pose(signal), &self.limits);
        self.gesture_done_at =
            if self.pose.max_rotary_gap(&self.target) <= crate::kinematics::ARRIVAL_TOLERANCE {
                Some(now)
            } else {
                None
            };
        self.current_signal = Some(signal);
        self.commands += 1;
        self.refresh_effective(now);
    }

    fn refresh_effective(&mut self, now: f64) {
        let next = effective_permissions(
            &self.effective,
            &self.commanded,
            self.gesture_done_at,
            now,
            self.cfg.reaction_delay,
        );
        for a in Approach::ALL {
            if self.effective.state.get(a) == Permission::Go
                && next.state.get(a) == Permission::Stop
            {
                let accel = self.cfg.accel;
                for v in self.lanes[a.index()]
                    .iter_mut()
                    .filter(|v| v.position >= 0.0)
                {
                    v.committed = v.position < v.speed * v.speed / (2.0 * accel);
                }
            }
        }
        self.effective = next;
    }

    /// Bernoulli arrival draws for this step, one per approach in fixed
    /// order. An arrival is refused while the entrance is occupied.
    pub fn spawn_arrivals(&mut self) -> Vec<Vehicle> {
        let now = self.now();
        let d = self.cfg.approach_length;
        let mut spawned = Vec::new();
        for a in Approach::ALL {
            let p = self.cfg.rate(a) * self.cfg.dt;
            if !self.rng.bernoulli(p) {
                continue;
            }
            let stats = &mut self.stats[a.index()];
            stats.attempted += 1;
            let lane = &mut self.lanes[a.index()];
            if lane
                .last()
                .is_some_and(|last| d - last.position < self.cfg.jam_spacing())
            {
                stats.blocked += 1;
                continue;
            }
            stats.spawned += 1;
            let v = Vehicle {
                id: self.next_id,
                approach: a,
                position: d,
                speed: self.cfg.free_speed,
                spawn_time: now,
                cross_complete_time: None,
                committed: false,
            };
            self.next_id += 1;
            lane.push(v.clone());
            spawned.push(v);
        }
        spawned
    }

    /// Put a vehicle on `approach` behind every vehicle already there, as if
    /// it had arrived now. Returns its id, or `None` if it would not be last
    /// in the lane.
    pub fn place_vehicle(&mut self, approach: Approach, position: f64, speed: f64) -> Option<u64> {
        let now = self.now();
        let lane = &mut self.lanes[approach.index()];
        if lane
            .last()
            .is_some_and(|last| position - last.position < self.cfg.jam_spacing())
        {
            return None;
        }
        let id = self.next_id;
        self.next_id += 1;
        lane.push(Vehicle {
            id,
            approach,
            position,
            speed: speed.clamp(0.0, self.cfg.free_speed),
            spawn_time: now,
            cross_complete_time: None,
            committed: false,
        });
        let stats = &mut self.stats[approach.index()];
        stats.attempted += 1;
        stats.spawned += 1;
        Some(id)
    }

    fn move_vehicles(&mut self) {
        let cfg = &self.cfg;
        let (dt, accel, vf) = (cfg.dt, cfg.accel, cfg.free_speed);
        let spacing = cfg.jam_spacing();
        for a in Approach::ALL {
            let stop = self.effective.state.get(a) == Permission::Stop;
            let mut leader: Option<(f64, f64)> = None;
            for v in self.lanes[a.index()].iter_mut() {
                let s = v.position;
                let mut cap = (v.speed + accel * dt).min(vf);
                let mut floor = f64::NEG_INFINITY;
                let obeys_stop = stop && !v.committed && s >= 0.0;
                if obeys_stop {
                    cap = cap.min((2.0 * accel * s).sqrt());
                    floor = 0.0;
                }
                if let Some((lead_pos, lead_speed)) = leader {
                    let limit = lead_pos + spacing;
                    let room = (s - limit) + lead_speed * lead_speed / (2.0 * accel);
                    cap = cap.min((2.0 * accel * room.max(0.0)).sqrt());
                    floor = floor.max(limit);
                }
                let mut speed = cap.max(0.0);
                let mut next = s - speed * dt;
                if next < floor {
                    next = floor.min(s);
                    speed = (s - next) / dt;
                }
                if stop && s >= 0.0 && next < 0.0 {
                    if v.committed {
                        self.counters.committed_crossings += 1;
                    } else {
                        self.counters.stop_line_violations += 1;
                    }
                }
                v.position = next;
                v.speed = speed;
                leader = Some((next, speed));
            }
        }
    }

    fn retire(&mut self) {
        let exit = -(self.cfg.box_size + self.cfg.vehicle_length);
        let t0 = self.now();
        let dt = self.cfg.dt;
        let free = self.cfg.free_flow_time();
        for a in Approach::ALL {
            let lane = &mut self.lanes[a.index()];
            let n_out = lane.iter().take_while(|v| v.position <= exit).count();
            for mut v in lane.drain(..n_out) {
                // Back out the exact crossing instant within the step.
                let travelled = v.speed * dt;
                let overshoot = exit - v.position;
                let frac = if travelled > 0.0 {
                    ((travelled - overshoot) / travelled).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let t = t0 + frac * dt;
                v.cross_complete_time = Some(t);
                let stats = &mut self.stats[a.index()];
                stats.crossed += 1;
                stats.crossed_delay_sum += (t - v.spawn_time - free).max(0.0);
                self.retired.push(v);
            }
        }
    }

    /// Records crossing-stream pairs sharing the box; each pair counts once.
    /// Returns the number of new pairs.
    pub fn detect_conflicts(&mut self) -> u64 {
        let exit = -(self.cfg.box_size + self.cfg.vehicle_length);
        let in_box = |a: Approach| {
            self.lanes[a.index()]
                .iter()
                .filter(move |v| v.position < 0.0 && v.position > exit)
                .map(|v| v.id)
        };
        let fb: Vec<u64> = in_box(Approach::Front)
            .chain(in_box(Approach::Behind))
            .collect();
        let lr: Vec<u64> = in_box(Approach::Left)
            .chain(in_box(Approach::Right))
            .collect();
        let mut new = 0;
        for &x in &fb {
            for &y in &lr {
                if self.conflict_pairs.insert((x, y)) {
                    new += 1;
                }
            }
        }
        new
    }

    fn check_lanes(&mut self) {
        let spacing = self.cfg.jam_spacing();
        let slack = self.cfg.dt * self.cfg.free_speed;
        for lane in &self.lanes {
            for pair in lane.windows(2) {
                let (lead, follow) = (&pair[0], &pair[1]);
                if follow.position <= lead.position {
                    self.counters.order_violations += 1;
                }
                if follow.speed < QUEUE_SPEED
                    && lead.speed < QUEUE_SPEED
                    && follow.position - lead.position < spacing - slack
                {
                    self.counters.gap_violations += 1;
                }
            }
        }
    }

    fn record_queues(&mut self) {
        let q = self.queue_lengths();
        for a in Approach::ALL {
            let stats = &mut self.stats[a.index()];
            stats.max_queue = stats.max_queue.max(q[a.index()] as u64);
        }
        self.max_total_queue = self.max_total_queue.max(q.iter().map(|&x| x as u64).sum());
    }

    /// Advance the clock by one `dt`.
    pub fn step(&mut self) {
        let now = self.now();
        let dt = self.cfg.dt;
        self.refresh_effective(now);
        self.spawn_arrivals();
        self.move_vehicles();
        if self.gesture_done_at.is_none() {
            let (pose, done) = interpolate(&self.pose, &self.target, self.limits.max_speed, dt)
                .expect("joint speed and dt validated with the scenario");
            self.pose = pose;
            if done {
                self.gesture_done_at = Some(now + dt);
            }
        }
        self.retire();
        self.detect_conflicts();
        self.check_lanes();
        self.record_queues();
        self.steps += 1;
    }

    pub fn run_to_end(&mut self) {
        while !self.is_finished() {
            self.step();
        }
    }

    /// Delay per vehicle is time in system beyond free flow, floored at 0.
    /// Vehicles still in the system count up to the current clock.
    pub fn collect_metrics(&self) -> MetricsReport {
        let now = self.now();
        let free = self.cfg.free_flow_time();
        let mut approaches = [ApproachMetrics::default(); 4];
        let mut total_delay = 0.0;
        let mut total = ApproachMetrics::default();
        for a in Approach::ALL {
            let st = &self.stats[a.index()];
            let lane = &self.lanes[a.index()];
            let waiting: f64 = lane
                .iter()
                .map(|v| (now - v.spawn_time - free).max(0.0))
                .sum();
            let delay_sum = st.crossed_delay_sum + waiting;
            let contributing = st.crossed + lane.len() as u64;
            let m = ApproachMetrics {
                arrivals: st.spawned,
                blocked: st.blocked,
                crossed: st.crossed,
                in_system: lane.len() as u64,
                mean_delay: if contributing > 0 {
                    delay_sum / contributing as f64
                } else {
                    0.0
                },
                max_queue: st.max_queue,
            };
            total.arrivals += m.arrivals;
            total.blocked += m.blocked;
            total.crossed += m.crossed;
            total.in_system += m.in_system;
            total_delay += delay_sum;
            approaches[a.index()] = m;
        }
        let contributing = total.crossed + total.in_system;
        total.mean_delay = if contributing > 0 {
            total_delay / contributing as f64
        } else {
            0.0
        };
        total.max_queue = self.max_total_queue;
        MetricsReport {
            approaches,
            total,
            conflicts: self.conflicts(),
            commands: self.commands,
            clock: now,
        }
    }
}
