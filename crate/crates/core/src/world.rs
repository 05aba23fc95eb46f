//! Road topology, vehicle registry and simulation clock.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::config::{ResolvedConfig, ScenarioKind};
use crate::dynamics::{ControlGains, ControlLimits, IdmParams, MobilParams, VehicleState};
use crate::error::WorldError;
use crate::geometry::{segment_intersection, wrap_angle, Polyline, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneId(pub u32);

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaneKind {
    Through,
    MergeRamp,
    IntersectionApproach,
    /// Movement inside the intersection box.
    IntersectionConnector,
    IntersectionExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Movement {
    Straight,
    Left,
    Right,
}

impl Movement {
    pub fn is_turn(self) -> bool {
        !matches!(self, Movement::Straight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

fn serialize_polyline<S: Serializer>(line: &Polyline, ser: S) -> Result<S::Ok, S::Error> {
    line.points().serialize(ser)
}

#[derive(Debug, Clone, Serialize)]
pub struct Lane {
    pub id: LaneId,
    #[serde(serialize_with = "serialize_polyline")]
    pub centerline: Polyline,
    pub width: f64,
    pub successors: Vec<LaneId>,
    pub kind: LaneKind,
    pub movement: Movement,
    /// Laterally adjacent lanes, each covering part of this lane's extent.
    pub left: Vec<LaneId>,
    pub right: Vec<LaneId>,
}

impl Lane {
    pub fn new(id: LaneId, points: Vec<Vec2>, width: f64, kind: LaneKind) -> Result<Self, WorldError> {
        let centerline = Polyline::new(points)
            .ok_or_else(|| WorldError::Geometry(format!("lane {id} needs >= 2 distinct consecutive points")))?;
        if !(width > 0.0) {
            return Err(WorldError::Geometry(format!("lane {id} width must be positive")));
        }
        Ok(Self {
            id,
            centerline,
            width,
            successors: Vec::new(),
            kind,
            movement: Movement::Straight,
            left: Vec::new(),
            right: Vec::new(),
        })
    }

    pub fn length(&self) -> f64 {
        self.centerline.length()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictKind {
    Crossing,
    Merging,
    RearEndSharedLane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictPoint {
    pub lane_a: LaneId,
    pub lane_b: LaneId,
    pub position: Vec2,
    pub kind: ConflictKind,
    /// Arc length of the point along `lane_a` and `lane_b`.
    pub s_a: f64,
    pub s_b: f64,
}

impl ConflictPoint {
    pub fn involves(&self, lane: LaneId) -> bool {
        self.lane_a == lane || self.lane_b == lane
    }

    /// Arc length of the point along `lane`, if the lane is one of its two.
    pub fn s_on(&self, lane: LaneId) -> Option<f64> {
        if self.lane_a == lane {
            Some(self.s_a)
        } else if self.lane_b == lane {
            Some(self.s_b)
        } else {
            None
        }
    }
}

/// Parameters the world needs to run the vehicle models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldParams {
    pub idm: IdmParams,
    pub mobil: MobilParams,
    pub gains: ControlGains,
    pub limits: ControlLimits,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub lookahead_min: f64,
    pub lookahead_time: f64,
    pub lateral_accel: f64,
    pub speed_limit: f64,
}

impl WorldParams {
    pub fn from_config(cfg: &ResolvedConfig) -> Self {
        Self {
            idm: cfg.idm.clone(),
            mobil: cfg.mobil.clone(),
            gains: cfg.gains,
            limits: cfg.limits,
            vehicle_length: cfg.vehicle.length,
            vehicle_width: cfg.vehicle.width,
            lookahead_min: cfg.lookahead_min,
            lookahead_time: cfg.lookahead_time,
            lateral_accel: cfg.lateral_accel,
            speed_limit: cfg.speed_limit,
        }
    }
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
            gains: ControlGains { kp: 1.0, kh: 2.0 },
            limits: ControlLimits::default(),
            vehicle_length: 5.0,
            vehicle_width: 2.0,
            lookahead_min: 5.0,
            lookahead_time: 0.8,
            lateral_accel: 3.0,
            speed_limit: 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub id: VehicleId,
    pub time: f64,
    pub is_cav: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Main,
    Leaving,
    Joining,
}

/// One lane of a longitudinal frame; vehicles count while their body
/// overlaps `from..until` along the lane.
#[derive(Debug, Clone, Copy)]
struct FrameLane {
    lane: LaneId,
    offset: f64,
    from: f64,
    until: f64,
    kind: Branch,
}

impl FrameLane {
    fn main(lane: LaneId, offset: f64) -> Self {
        Self { lane, offset, from: f64::NEG_INFINITY, until: f64::INFINITY, kind: Branch::Main }
    }
}

/// Another vehicle seen along a longitudinal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: VehicleId,
    /// Bumper-to-bumper gap (m); may be negative when footprints overlap.
    pub gap: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct World {
    pub kind: ScenarioKind,
    pub lanes: BTreeMap<LaneId, Lane>,
    pub vehicles: BTreeMap<VehicleId, VehicleState>,
    pub cav_ids: BTreeSet<VehicleId>,
    pub step: u64,
    pub dt: f64,
    pub arrivals: Vec<Arrival>,
    pub params: WorldParams,
}

impl World {
    pub fn new(kind: ScenarioKind, lanes: Vec<Lane>, dt: f64, params: WorldParams) -> Result<Self, WorldError> {
        if !(dt > 0.0) {
            return Err(WorldError::Geometry("dt must be positive".into()));
        }
        let mut map = BTreeMap::new();
        for lane in lanes {
            if map.insert(lane.id, lane).is_some() {
                return Err(WorldError::Geometry("duplicate lane id".into()));
            }
        }
        for lane in map.values() {
            for l in lane.successors.iter().chain(&lane.left).chain(&lane.right) {
                if !map.contains_key(l) {
                    return Err(WorldError::Geometry(format!("lane {} references unknown lane {l}", lane.id)));
                }
            }
        }
        Ok(Self {
            kind,
            lanes: map,
            vehicles: BTreeMap::new(),
            cav_ids: BTreeSet::new(),
            step: 0,
            dt,
            arrivals: Vec::new(),
            params,
        })
    }

    /// Registers a vehicle. The lane must be on its route.
    pub fn insert_vehicle(&mut self, mut state: VehicleState) -> Result<(), WorldError> {
        if self.vehicles.contains_key(&state.id) {
            return Err(WorldError::DuplicateVehicle(state.id));
        }
        if !state.route.contains(&state.lane_id) || state.route.iter().any(|l| !self.lanes.contains_key(l)) {
            return Err(WorldError::Geometry(format!("vehicle {} has an invalid route", state.id)));
        }
        state.sync_velocity();
        if state.is_cav {
            self.cav_ids.insert(state.id);
        }
        self.vehicles.insert(state.id, state);
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.vehicles.get(&id)
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[&id]
    }

    pub fn is_cav(&self, id: VehicleId) -> bool {
        self.cav_ids.contains(&id)
    }

    /// Arc length of the vehicle along its assigned lane.
    pub fn lane_progress(&self, v: &VehicleState) -> f64 {
        self.lane(v.lane_id).centerline.project(v.position()).s
    }

    pub fn lateral_offset(&self, v: &VehicleState) -> f64 {
        self.lane(v.lane_id).centerline.project(v.position()).lateral
    }

    fn route_offset(&self, route: &[LaneId], index: usize) -> f64 {
        route[..index].iter().map(|l| self.lane(*l).length()).sum()
    }

    /// Arc length along the vehicle's full route.
    pub fn route_position(&self, v: &VehicleState) -> f64 {
        self.route_offset(&v.route, v.route_index()) + self.lane_progress(v)
    }

    /// Remaining route length.
    pub fn route_remaining(&self, v: &VehicleState) -> f64 {
        self.route_offset(&v.route, v.route.len()) - self.route_position(v)
    }

    /// Signed distance along the route from the vehicle to `point`, or `None`
    /// if the vehicle's route uses neither lane of the point.
    pub fn distance_to_point(&self, v: &VehicleState, point: &ConflictPoint) -> Option<f64> {
        let (idx, s) = v
            .route
            .iter()
            .enumerate()
            .find_map(|(i, l)| point.s_on(*l).map(|s| (i, s)))?;
        Some(self.route_offset(&v.route, idx) + s - self.route_position(v))
    }

    /// Lanes of a longitudinal frame: the given sequence with start
    /// offsets, direct predecessors of its first lane, and the branches
    /// that leave or join the sequence. Vehicles on a branch count only
    /// while their body is where the branch runs within a body width of the
    /// sequence.
    fn frame(&self, seq: &[LaneId]) -> Vec<FrameLane> {
        let mut out = Vec::new();
        let mut offset = 0.0;
        for (i, l) in seq.iter().enumerate() {
            out.push(FrameLane::main(*l, offset));
            if i > 0 {
                let prev = seq[i - 1];
                for sib in &self.lane(prev).successors {
                    if !seq.contains(sib) {
                        let until = self.divergence(*l, *sib);
                        out.push(FrameLane { lane: *sib, offset, from: f64::NEG_INFINITY, until, kind: Branch::Leaving });
                    }
                }
                for lane in self.lanes.values() {
                    if lane.successors.contains(l) && !seq.contains(&lane.id) {
                        let from = self.convergence(prev, lane.id);
                        let len = lane.length();
                        out.push(FrameLane { lane: lane.id, offset: offset - len, from, until: f64::INFINITY, kind: Branch::Joining });
                    }
                }
            }
            offset += self.lane(*l).length();
        }
        if let Some(first) = seq.first() {
            for lane in self.lanes.values() {
                if lane.successors.contains(first) && !seq.contains(&lane.id) {
                    out.push(FrameLane::main(lane.id, -lane.length()));
                }
            }
        }
        out
    }

    fn clearance(&self) -> f64 {
        self.params.vehicle_width + 0.5
    }

    /// Arc length along `branch` at which it is a body width (plus margin)
    /// away from `main`.
    fn divergence(&self, main: LaneId, branch: LaneId) -> f64 {
        const STEP: f64 = 0.5;
        let (m, b) = (&self.lane(main).centerline, &self.lane(branch).centerline);
        let mut s = 0.0;
        while s < b.length() {
            if m.distance_to(b.point_at(s)) > self.clearance() {
                return s;
            }
            s += STEP;
        }
        b.length()
    }

    /// Arc length along `branch` from which it stays within a body width
    /// (plus margin) of `main` up to its end.
    fn convergence(&self, main: LaneId, branch: LaneId) -> f64 {
        const STEP: f64 = 0.5;
        let (m, b) = (&self.lane(main).centerline, &self.lane(branch).centerline);
        let mut s = b.length();
        while s > 0.0 && m.distance_to(b.point_at(s - STEP)) <= self.clearance() {
            s -= STEP;
        }
        s
    }

    /// Lane sequence starting at `start`: the rest of `route` if `start` is on
    /// it, otherwise `start` followed by first successors.
    pub fn lane_chain(&self, start: LaneId, route: &[LaneId]) -> Vec<LaneId> {
        if let Some(i) = route.iter().position(|l| *l == start) {
            return route[i..].to_vec();
        }
        let mut chain = vec![start];
        let mut cur = start;
        while let Some(next) = self.lane(cur).successors.first().copied() {
            if chain.contains(&next) || chain.len() >= 4 {
                break;
            }
            chain.push(next);
            cur = next;
        }
        chain
    }

    fn nearest_in_frame(&self, ego: &VehicleState, frame: &[FrameLane], ego_s: f64) -> (Option<Neighbor>, Option<Neighbor>) {
        let mut ahead: Option<Neighbor> = None;
        let mut behind: Option<Neighbor> = None;
        for other in self.vehicles.values() {
            if other.id == ego.id {
                continue;
            }
            let Some(entry) = frame.iter().find(|f| f.lane == other.lane_id) else { continue };
            let progress = self.lane_progress(other);
            if progress + other.length / 2.0 <= entry.from || progress - other.length / 2.0 >= entry.until {
                continue;
            }
            let s = entry.offset + progress;
            let half = (ego.length + other.length) / 2.0;
            if s > ego_s || (s == ego_s && other.id > ego.id) {
                let gap = s - ego_s - half;
                if ahead.as_ref().is_none_or(|a| gap < a.gap) {
                    ahead = Some(Neighbor { id: other.id, gap, speed: other.speed });
                }
            } else if entry.kind != Branch::Leaving {
                let gap = ego_s - s - half;
                if behind.as_ref().is_none_or(|b| gap < b.gap) {
                    behind = Some(Neighbor { id: other.id, gap, speed: other.speed });
                }
            }
        }
        (ahead, behind)
    }

    fn route_frame(&self, v: &VehicleState) -> (Vec<FrameLane>, f64) {
        (self.frame(&v.route), self.route_position(v))
    }

    /// Nearest vehicle ahead along the route.
    pub fn leader_of(&self, v: &VehicleState) -> Option<Neighbor> {
        let (frame, s) = self.route_frame(v);
        self.nearest_in_frame(v, &frame, s).0
    }

    /// Nearest vehicle behind along the route.
    pub fn follower_of(&self, v: &VehicleState) -> Option<Neighbor> {
        let (frame, s) = self.route_frame(v);
        self.nearest_in_frame(v, &frame, s).1
    }

    /// Leader and follower the vehicle would have in `lane` at its current
    /// longitudinal position.
    pub fn neighbors_in_lane(&self, v: &VehicleState, lane: LaneId) -> (Option<Neighbor>, Option<Neighbor>) {
        let chain = self.lane_chain(lane, &[]);
        let frame = self.frame(&chain);
        let s = self.lane(lane).centerline.project(v.position()).s;
        self.nearest_in_frame(v, &frame, s)
    }

    /// Adjacent lane on `side` covering the vehicle's longitudinal position.
    pub fn adjacent_lane(&self, v: &VehicleState, side: Side) -> Option<LaneId> {
        let lane = self.lane(v.lane_id);
        let candidates = match side {
            Side::Left => &lane.left,
            Side::Right => &lane.right,
        };
        candidates.iter().copied().find(|c| {
            let s = self.lane(*c).centerline.project(v.position()).s;
            s >= 0.0 && s < self.lane(*c).length()
        })
    }

    /// The centerlines of `chain` joined into one path.
    pub fn chain_path(&self, chain: &[LaneId]) -> Polyline {
        let mut pts: Vec<Vec2> = Vec::new();
        for l in chain {
            for p in self.lane(*l).centerline.points() {
                if pts.last().is_none_or(|q| q.distance(*p) > 1e-9) {
                    pts.push(*p);
                }
            }
        }
        Polyline::new(pts).expect("lane chain has valid geometry")
    }

    /// Remaining route as one path, and the vehicle's arc length on it.
    pub fn route_path(&self, v: &VehicleState) -> (Polyline, f64) {
        let path = self.chain_path(&v.route[v.route_index()..]);
        let s = path.project(v.position()).s;
        (path, s)
    }

    /// Safe-following speed toward the current leader: the highest speed
    /// from which the vehicle, reacting after one step and braking
    /// comfortably, stops short of where the leader can stop.
    pub fn following_speed(&self, v: &VehicleState, dt: f64) -> f64 {
        let Some(l) = self.leader_of(v) else { return f64::INFINITY };
        let b = self.params.idm.comfort_decel;
        let room = l.gap - self.params.idm.min_gap;
        let disc = b * b * dt * dt + l.speed * l.speed + 2.0 * b * room;
        if disc <= 0.0 {
            return 0.0;
        }
        (-b * dt + disc.sqrt()).max(0.0)
    }

    /// Highest speed from which the vehicle can slow, at comfortable
    /// deceleration, to keep lateral acceleration within bounds on every
    /// curve of its route ahead.
    pub fn curve_speed(&self, v: &VehicleState) -> f64 {
        // Curvature is averaged over a window spanning several polyline
        // vertices, since headings are constant per segment.
        const STEP: f64 = 1.0;
        const WINDOW: f64 = 4.0;
        let (path, s0) = self.route_path(v);
        let b = self.params.idm.comfort_decel;
        let preview = 10.0 + v.speed * v.speed / (2.0 * b);
        let mut cap = f64::INFINITY;
        let mut d = 0.0;
        while d <= preview && s0 + d + WINDOW <= path.length() {
            let turn = wrap_angle(path.heading_at(s0 + d + WINDOW) - path.heading_at(s0 + d)).abs();
            if turn > 1e-9 {
                let v_here = (self.params.lateral_accel * WINDOW / turn).sqrt();
                cap = cap.min((v_here * v_here + 2.0 * b * d).sqrt());
            }
            d += STEP;
        }
        cap
    }

    /// Heading reference for pure pursuit toward a lookahead point on
    /// `target` (and the lanes that follow it): the heading for which the
    /// steering law yields the front-wheel angle that puts the vehicle on
    /// the circle through that point.
    pub fn reference_heading(&self, v: &VehicleState, target: LaneId) -> f64 {
        let path = self.chain_path(&self.lane_chain(target, &v.route));
        let s = path.project(v.position()).s;
        let lookahead = self.params.lookahead_min.max(self.params.lookahead_time * v.speed);
        let to_target = path.point_at(s + lookahead) - v.position();
        let alpha = wrap_angle(to_target.angle() - v.heading);
        if alpha.abs() >= FRAC_PI_2 {
            // Target behind: turn toward it as hard as the law allows.
            return v.heading + alpha;
        }
        // The body moves along heading + slip, and the slip depends on the
        // steering being chosen; a few fixed-point passes settle it.
        let dist = to_target.norm().max(1e-6);
        let mut beta = 0.0;
        for _ in 0..8 {
            let curvature = 2.0 * (alpha - beta).sin() / dist;
            beta = 0.5 * beta + 0.5 * (curvature * v.length).clamp(-1.0, 1.0).asin();
        }
        let steer = (2.0 * beta.tan()).atan();
        let gains = &self.params.gains;
        v.heading + steer.sin() * 2.0 * v.speed.max(self.params.limits.v_floor) / (gains.kh * v.length)
    }

    /// Moves `state` onto `target`, replacing the remainder of its route.
    pub fn commit_lane(&self, state: &mut VehicleState, target: LaneId) {
        if state.lane_id == target {
            return;
        }
        state.route = self.lane_chain(target, &state.route);
        state.lane_id = target;
    }

    fn update_lane(&self, v: &mut VehicleState) {
        loop {
            let idx = v.route_index();
            let s = self.lane_progress(v);
            if s >= self.lane(v.lane_id).length() && idx + 1 < v.route.len() {
                v.lane_id = v.route[idx + 1];
            } else {
                break;
            }
        }
    }

    fn has_arrived(&self, v: &VehicleState) -> bool {
        v.route_index() + 1 == v.route.len() && self.lane_progress(v) >= self.lane(v.lane_id).length()
    }

    /// Replaces every vehicle state at once and advances the clock by one
    /// step. Vehicles past the end of their route are removed and logged.
    pub fn advance_clock(&mut self, next: Vec<VehicleState>) -> Result<Vec<Arrival>, WorldError> {
        let mut seen = BTreeSet::new();
        for s in &next {
            if !self.vehicles.contains_key(&s.id) {
                return Err(WorldError::UnknownVehicle(s.id));
            }
            if !seen.insert(s.id) {
                return Err(WorldError::DuplicateVehicle(s.id));
            }
        }
        if let Some(missing) = self.vehicles.keys().find(|id| !seen.contains(id)) {
            return Err(WorldError::MissingVehicle(*missing));
        }
        self.step += 1;
        let time = self.time();
        let mut arrived = Vec::new();
        let mut registry = BTreeMap::new();
        for mut s in next {
            self.update_lane(&mut s);
            if self.has_arrived(&s) {
                arrived.push(Arrival { id: s.id, time, is_cav: s.is_cav });
            } else {
                registry.insert(s.id, s);
            }
        }
        self.vehicles = registry;
        self.arrivals.extend(arrived.iter().copied());
        Ok(arrived)
    }

    /// CAVs still in the world.
    pub fn active_cavs(&self) -> Vec<VehicleId> {
        self.cav_ids.iter().copied().filter(|id| self.vehicles.contains_key(id)).collect()
    }

    pub fn conflict_points(&self) -> Vec<ConflictPoint> {
        conflict_points(self.lanes.values())
    }
}

const CONFLICT_TOL: f64 = 0.01;

fn same_point(a: Vec2, b: Vec2) -> bool {
    a.distance(b) <= CONFLICT_TOL
}

/// Every crossing between distinct lane centerlines, every merge junction,
/// and one shared-lane marker per lane. Points where lanes meet end-to-start
/// (succession) or start-to-start (divergence) are not conflicts.
pub fn conflict_points<'a>(lanes: impl IntoIterator<Item = &'a Lane>) -> Vec<ConflictPoint> {
    let mut lanes: Vec<&Lane> = lanes.into_iter().collect();
    lanes.sort_by_key(|l| l.id);
    let mut out = Vec::new();
    for (i, a) in lanes.iter().enumerate() {
        out.push(ConflictPoint {
            lane_a: a.id,
            lane_b: a.id,
            position: a.centerline.start(),
            kind: ConflictKind::RearEndSharedLane,
            s_a: 0.0,
            s_b: 0.0,
        });
        for b in &lanes[i + 1..] {
            let mut found: Vec<ConflictPoint> = Vec::new();
            let shared_successor = a.successors.iter().find(|s| b.successors.contains(s));
            if shared_successor.is_some() && same_point(a.centerline.end(), b.centerline.end()) {
                found.push(ConflictPoint {
                    lane_a: a.id,
                    lane_b: b.id,
                    position: a.centerline.end(),
                    kind: ConflictKind::Merging,
                    s_a: a.length(),
                    s_b: b.length(),
                });
            }
            for (a0, a1) in a.centerline.segments() {
                for (b0, b1) in b.centerline.segments() {
                    let Some(p) = segment_intersection(a0, a1, b0, b1, CONFLICT_TOL) else { continue };
                    let a_end = same_point(p, a.centerline.start()) || same_point(p, a.centerline.end());
                    let b_end = same_point(p, b.centerline.start()) || same_point(p, b.centerline.end());
                    if a_end && b_end {
                        continue;
                    }
                    if found.iter().any(|f| same_point(f.position, p)) {
                        continue;
                    }
                    found.push(ConflictPoint {
                        lane_a: a.id,
                        lane_b: b.id,
                        position: p,
                        kind: ConflictKind::Crossing,
                        s_a: a.centerline.project(p).s,
                        s_b: b.centerline.project(p).s,
                    });
                }
            }
            out.extend(found);
        }
    }
    out.sort_by(|p, q| {
        (p.lane_a, p.lane_b, p.kind)
            .cmp(&(q.lane_a, q.lane_b, q.kind))
            .then(p.position.x.total_cmp(&q.position.x))
            .then(p.position.y.total_cmp(&q.position.y))
    });
    out
}
