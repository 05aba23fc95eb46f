//! What a CAV sees: range-limited observation, lane/vehicle grouping,
//! shared intents and the textual scene rendering.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::error::WorldError;
use crate::geometry::Vec2;
use crate::world::{ConflictKind, ConflictPoint, LaneId, LaneKind, Movement, Side, VehicleId, World};

/// Feature row of one observed vehicle: position, velocity and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub cos_phi: f64,
    pub sin_phi: f64,
}

impl FeatureRow {
    fn of(v: &VehicleState) -> Self {
        Self {
            id: v.id,
            x: v.x,
            y: v.y,
            vx: v.vx,
            vy: v.vy,
            cos_phi: v.heading.cos(),
            sin_phi: v.heading.sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub ego_id: VehicleId,
    /// Sorted by vehicle id; the ego is never included.
    pub rows: Vec<FeatureRow>,
    pub range: f64,
}

impl Observation {
    pub fn contains(&self, id: VehicleId) -> bool {
        self.rows.binary_search_by_key(&id, |r| r.id).is_ok()
    }
}

/// Every other vehicle within Euclidean distance `range` of the ego.
pub fn observe(world: &World, ego_id: VehicleId, range: f64) -> Result<Observation, WorldError> {
    let ego = world.vehicle(ego_id).ok_or(WorldError::NoSuchVehicle(ego_id))?;
    let p = ego.position();
    let mut rows: Vec<FeatureRow> = world
        .vehicles
        .values()
        .filter(|v| v.id != ego_id && v.position().distance(p) <= range)
        .map(FeatureRow::of)
        .collect();
    rows.sort_by_key(|r| r.id);
    Ok(Observation { ego_id, rows, range })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneContext {
    pub ego_lane: LaneId,
    pub left: Option<LaneId>,
    pub right: Option<LaneId>,
    /// Lanes crossing or merging with the rest of the ego route.
    pub conflict_lanes: Vec<LaneId>,
}

/// A vehicle in the leading, rearing or surrounding group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    pub id: VehicleId,
    pub is_cav: bool,
    pub lane: LaneId,
    /// Longitudinal bumper-to-bumper gap; positive ahead of the ego.
    pub gap: f64,
    pub speed: f64,
    /// Which adjacent lane, for surrounding vehicles.
    pub side: Option<Side>,
}

/// A vehicle approaching a conflict point shared with the ego route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictMember {
    pub id: VehicleId,
    pub is_cav: bool,
    pub lane: LaneId,
    pub speed: f64,
    pub movement: Option<Movement>,
    pub kind: ConflictKind,
    pub point: Vec2,
    /// Remaining path distance of this vehicle and of the ego to the point.
    pub distance: f64,
    pub ego_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleGroups {
    pub leading: Option<GroupMember>,
    pub rearing: Option<GroupMember>,
    pub surrounding: Vec<GroupMember>,
    pub conflict: Vec<ConflictMember>,
}

impl VehicleGroups {
    pub fn ids(&self) -> Vec<VehicleId> {
        let mut ids: Vec<VehicleId> = self.leading.iter().chain(&self.rearing).chain(&self.surrounding).map(|m| m.id).collect();
        ids.extend(self.conflict.iter().map(|m| m.id));
        ids
    }

    pub fn is_empty(&self) -> bool {
        self.leading.is_none() && self.rearing.is_none() && self.surrounding.is_empty() && self.conflict.is_empty()
    }
}

/// Turning movement planned on the rest of the route, if it enters an
/// intersection.
pub fn route_movement(world: &World, v: &VehicleState) -> Option<Movement> {
    v.route[v.route_index()..]
        .iter()
        .map(|l| world.lane(*l))
        .find(|l| l.kind == LaneKind::IntersectionConnector)
        .map(|l| l.movement)
}

/// First route lane that touches `point`, with the signed path distance to
/// it; negative once the point is behind.
pub fn point_on_route(world: &World, v: &VehicleState, point: &ConflictPoint) -> Option<(LaneId, f64)> {
    let lane = v.route.iter().copied().find(|l| point.involves(*l))?;
    let d = world.distance_to_point(v, point)?;
    Some((lane, d))
}

/// Lanes of a crossing or merging point, one on each route, with both
/// distances. `None` if the routes do not meet there from different lanes.
pub fn shared_point(world: &World, a: &VehicleState, b: &VehicleState, point: &ConflictPoint) -> Option<(f64, f64)> {
    if point.kind == ConflictKind::RearEndSharedLane {
        return None;
    }
    let (la, da) = point_on_route(world, a, point)?;
    let (lb, db) = point_on_route(world, b, point)?;
    (la != lb).then_some((da, db))
}

pub fn classify(
    world: &World,
    ego_id: VehicleId,
    points: &[ConflictPoint],
    range: f64,
) -> Result<(LaneContext, VehicleGroups), WorldError> {
    let obs = observe(world, ego_id, range)?;
    let ego = world.vehicle(ego_id).ok_or(WorldError::NoSuchVehicle(ego_id))?;
    let left = world.adjacent_lane(ego, Side::Left);
    let right = world.adjacent_lane(ego, Side::Right);

    let mut conflict_lanes = BTreeSet::new();
    for p in points.iter().filter(|p| p.kind != ConflictKind::RearEndSharedLane) {
        if let Some((lane, d)) = point_on_route(world, ego, p) {
            if d >= 0.0 {
                let other = if p.lane_a == lane { p.lane_b } else { p.lane_a };
                conflict_lanes.insert(other);
            }
        }
    }
    conflict_lanes.remove(&ego.lane_id);
    let ctx = LaneContext {
        ego_lane: ego.lane_id,
        left,
        right,
        conflict_lanes: conflict_lanes.into_iter().collect(),
    };

    let mut taken = BTreeSet::new();
    let member = |n: crate::world::Neighbor, sign: f64| {
        let v = &world.vehicles[&n.id];
        GroupMember { id: n.id, is_cav: v.is_cav, lane: v.lane_id, gap: sign * n.gap, speed: n.speed, side: None }
    };
    let leading = world.leader_of(ego).filter(|n| obs.contains(n.id)).map(|n| member(n, 1.0));
    let rearing = world.follower_of(ego).filter(|n| obs.contains(n.id)).map(|n| member(n, -1.0));
    taken.extend(leading.iter().chain(&rearing).map(|m| m.id));

    let mut surrounding = Vec::new();
    let lane = world.lane(ego.lane_id);
    for (side, lanes) in [(Side::Left, &lane.left), (Side::Right, &lane.right)] {
        for row in &obs.rows {
            let other = &world.vehicles[&row.id];
            if taken.contains(&row.id) || !lanes.contains(&other.lane_id) {
                continue;
            }
            let line = &world.lane(other.lane_id).centerline;
            let ds = line.project(other.position()).s - line.project(ego.position()).s;
            let half = (ego.length + other.length) / 2.0;
            let gap = if ds >= 0.0 { (ds - half).max(0.0) } else { (ds + half).min(0.0) };
            surrounding.push(GroupMember {
                id: row.id,
                is_cav: other.is_cav,
                lane: other.lane_id,
                gap,
                speed: other.speed,
                side: Some(side),
            });
        }
    }
    taken.extend(surrounding.iter().map(|m| m.id));

    let mut conflict = Vec::new();
    for row in &obs.rows {
        if taken.contains(&row.id) {
            continue;
        }
        let other = &world.vehicles[&row.id];
        let best = points
            .iter()
            .filter_map(|p| shared_point(world, ego, other, p).map(|d| (p, d)))
            .filter(|(_, (de, dv))| *de >= 0.0 && *dv >= 0.0)
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
        if let Some((p, (de, dv))) = best {
            conflict.push(ConflictMember {
                id: row.id,
                is_cav: other.is_cav,
                lane: other.lane_id,
                speed: other.speed,
                movement: route_movement(world, other),
                kind: p.kind,
                point: p.position,
                distance: dv,
                ego_distance: de,
            });
        }
    }
    Ok((ctx, VehicleGroups { leading, rearing, surrounding, conflict }))
}

/// Expected lane and speed a CAV shares with the others.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub vehicle_id: VehicleId,
    pub expected_lane: LaneId,
    pub expected_speed: f64,
}

/// What the last decision implies for the intent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntentHint {
    pub reference_speed: f64,
    /// Target of a lane change decided last.
    pub lane_change: Option<LaneId>,
}

pub fn share_intent(world: &World, id: VehicleId, hint: IntentHint) -> Result<Intent, WorldError> {
    let v = world.vehicle(id).ok_or(WorldError::NoSuchVehicle(id))?;
    if !v.is_cav {
        return Err(WorldError::NotCav(id));
    }
    let expected_lane = hint.lane_change.filter(|l| v.route.contains(l)).unwrap_or(v.lane_id);
    Ok(Intent { vehicle_id: id, expected_lane, expected_speed: hint.reference_speed.max(0.0) })
}

/// Ego status shown at the top of the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoStatus {
    pub id: VehicleId,
    pub lane: LaneId,
    pub speed: f64,
    /// Remaining route length (m).
    pub remaining: f64,
    pub movement: Option<Movement>,
}

impl EgoStatus {
    pub fn of(world: &World, v: &VehicleState) -> Self {
        Self {
            id: v.id,
            lane: v.lane_id,
            speed: v.speed,
            remaining: world.route_remaining(v),
            movement: route_movement(world, v),
        }
    }
}

/// Everything a scene text is rendered from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFacts {
    pub ego: EgoStatus,
    pub context: LaneContext,
    pub groups: VehicleGroups,
    /// Intents of CAVs in the groups, sorted by vehicle id.
    pub intents: Vec<Intent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub ego_id: VehicleId,
    pub text: String,
    pub facts: SceneFacts,
}

/// Renders the scene. Only intents of CAVs present in the groups are kept.
pub fn render_scene(ego: EgoStatus, context: LaneContext, groups: VehicleGroups, intents: &[Intent]) -> SceneDescription {
    let ids = groups.ids();
    let mut kept: Vec<Intent> = intents
        .iter()
        .filter(|i| i.vehicle_id != ego.id && ids.contains(&i.vehicle_id))
        .copied()
        .collect();
    kept.sort_by_key(|i| i.vehicle_id);
    kept.dedup_by_key(|i| i.vehicle_id);
    let facts = SceneFacts { ego, context, groups, intents: kept };
    SceneDescription { ego_id: facts.ego.id, text: render_facts(&facts), facts }
}

/// One decimal, with negative zero printed as zero.
pub fn round1(x: f64) -> String {
    let r = (x * 10.0).round() / 10.0;
    format!("{:.1}", r + 0.0)
}

fn kind_label(is_cav: bool) -> &'static str {
    if is_cav {
        "CAV"
    } else {
        "HDV"
    }
}

fn movement_phrase(m: Movement) -> &'static str {
    match m {
        Movement::Straight => "go straight",
        Movement::Left => "turn left",
        Movement::Right => "turn right",
    }
}

fn intent_suffix(facts: &SceneFacts, id: VehicleId) -> String {
    match facts.intents.iter().find(|i| i.vehicle_id == id) {
        Some(i) => format!("; it intends to use lane {} at {} m/s", i.expected_lane, round1(i.expected_speed)),
        None => String::new(),
    }
}

fn relative(gap: f64) -> String {
    if gap >= 0.0 {
        format!("{} m ahead", round1(gap))
    } else {
        format!("{} m behind", round1(-gap))
    }
}

fn member_line(facts: &SceneFacts, m: &GroupMember) -> String {
    format!(
        "vehicle {} ({}) in lane {}, {}, speed {} m/s{}",
        m.id,
        kind_label(m.is_cav),
        m.lane,
        relative(m.gap),
        round1(m.speed),
        intent_suffix(facts, m.id)
    )
}

pub fn render_facts(facts: &SceneFacts) -> String {
    let mut out = String::new();
    let e = &facts.ego;
    let _ = write!(
        out,
        "You are vehicle {} driving in lane {} at {} m/s with {} m of route remaining.",
        e.id,
        e.lane,
        round1(e.speed),
        round1(e.remaining)
    );
    if let Some(m) = e.movement {
        let _ = write!(out, " You plan to {} at the intersection.", movement_phrase(m));
    }
    out.push('\n');

    let c = &facts.context;
    let side = |name: &str, l: Option<LaneId>| match l {
        Some(l) => format!("the {name} lane is {l}"),
        None => format!("there is no {name} lane"),
    };
    let conflicts = if c.conflict_lanes.is_empty() {
        "no lanes conflict with your route".to_string()
    } else {
        let list: Vec<String> = c.conflict_lanes.iter().map(|l| l.to_string()).collect();
        format!("lanes {} conflict with your route", list.join(", "))
    };
    let _ = writeln!(out, "Lanes: {}; {}; {}.", side("left", c.left), side("right", c.right), conflicts);

    let g = &facts.groups;
    if g.is_empty() {
        out.push_str("There are no surrounding vehicles.\n");
        return out;
    }
    match &g.leading {
        Some(m) => {
            let _ = writeln!(out, "Leading vehicle: {}.", member_line(facts, m));
        }
        None => out.push_str("Leading vehicle: none.\n"),
    }
    match &g.rearing {
        Some(m) => {
            let _ = writeln!(out, "Rearing vehicle: {}.", member_line(facts, m));
        }
        None => out.push_str("Rearing vehicle: none.\n"),
    }
    if g.surrounding.is_empty() {
        out.push_str("Surrounding vehicles in adjacent lanes: none.\n");
    } else {
        out.push_str("Surrounding vehicles in adjacent lanes:\n");
        for m in &g.surrounding {
            let side = match m.side {
                Some(Side::Left) => "left",
                Some(Side::Right) => "right",
                None => "adjacent",
            };
            let _ = writeln!(out, "- on your {side}: {}.", member_line(facts, m));
        }
    }
    if g.conflict.is_empty() {
        out.push_str("Conflict vehicles: none.\n");
    } else {
        out.push_str("Conflict vehicles:\n");
        for m in &g.conflict {
            let what = match m.kind {
                ConflictKind::Merging => "merge point",
                _ => "crossing point",
            };
            let turn = m.movement.map(|mv| format!(", planning to {}", movement_phrase(mv))).unwrap_or_default();
            let _ = writeln!(
                out,
                "- vehicle {} ({}) in lane {}, speed {} m/s{turn}, is {} m from the {what} at ({}, {}); you are {} m from it{}.",
                m.id,
                kind_label(m.is_cav),
                m.lane,
                round1(m.speed),
                round1(m.distance),
                round1(m.point.x),
                round1(m.point.y),
                round1(m.ego_distance),
                intent_suffix(facts, m.id)
            );
        }
    }
    out
}

/// Observation, grouping and rendering for one CAV.
pub fn describe(world: &World, ego_id: VehicleId, points: &[ConflictPoint], range: f64, intents: &[Intent]) -> Result<SceneDescription, WorldError> {
    let (ctx, groups) = classify(world, ego_id, points, range)?;
    let ego = EgoStatus::of(world, &world.vehicles[&ego_id]);
    Ok(render_scene(ego, ctx, groups, intents))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ScenarioConfig, ScenarioKind};
    use crate::scenario::{build_resolved, connector_lane, inbound_lane, place_on_route, place_vehicle};

    fn empty(kind: ScenarioKind) -> World {
        let cfg = ScenarioConfig::from_toml_str("[traffic]\ncavs = 0\nhdvs = 0").unwrap().resolve(kind).unwrap();
        build_resolved(&cfg).unwrap()
    }

    #[test]
    fn lone_vehicle_sees_nothing() {
        let mut w = empty(ScenarioKind::Highway);
        place_vehicle(&mut w, VehicleId(0), LaneId(1), 50.0, 20.0, true).unwrap();
        assert!(observe(&w, VehicleId(0), 100.0).unwrap().rows.is_empty());
        assert!(observe(&w, VehicleId(9), 100.0).is_err());
    }

    #[test]
    fn infinite_range_sees_everyone_else() {
        let mut w = empty(ScenarioKind::Highway);
        for i in 0..5 {
            place_vehicle(&mut w, VehicleId(i), LaneId(i % 4), 40.0 * i as f64, 20.0, true).unwrap();
        }
        let obs = observe(&w, VehicleId(2), f64::INFINITY).unwrap();
        assert_eq!(obs.rows.len(), 4);
        assert!(!obs.contains(VehicleId(2)));
    }

    #[test]
    fn nearer_of_two_leaders_is_leading() {
        let mut w = empty(ScenarioKind::Highway);
        place_vehicle(&mut w, VehicleId(0), LaneId(1), 50.0, 20.0, true).unwrap();
        place_vehicle(&mut w, VehicleId(1), LaneId(1), 90.0, 20.0, false).unwrap();
        place_vehicle(&mut w, VehicleId(2), LaneId(1), 70.0, 20.0, false).unwrap();
        place_vehicle(&mut w, VehicleId(3), LaneId(2), 60.0, 20.0, false).unwrap();
        let (ctx, g) = classify(&w, VehicleId(0), &w.conflict_points(), 100.0).unwrap();
        assert_eq!(g.leading.as_ref().unwrap().id, VehicleId(2));
        assert!((g.leading.as_ref().unwrap().gap - 15.0).abs() < 1e-9);
        assert!(g.rearing.is_none());
        assert_eq!(g.surrounding.len(), 1);
        assert_eq!(g.surrounding[0].side, Some(Side::Left));
        assert_eq!((ctx.left, ctx.right), (Some(LaneId(2)), Some(LaneId(0))));
    }

    #[test]
    fn empty_road_still_reports_lanes() {
        let mut w = empty(ScenarioKind::Highway);
        place_vehicle(&mut w, VehicleId(0), LaneId(0), 50.0, 20.0, true).unwrap();
        let (ctx, g) = classify(&w, VehicleId(0), &w.conflict_points(), 100.0).unwrap();
        assert!(g.is_empty());
        assert_eq!((ctx.left, ctx.right), (Some(LaneId(1)), None));
        let scene = render_scene(EgoStatus::of(&w, &w.vehicles[&VehicleId(0)]), ctx, g, &[]);
        assert!(scene.text.contains("There are no surrounding vehicles."));
    }

    fn crossing_pair(other_s: f64) -> World {
        let mut w = empty(ScenarioKind::Intersection);
        let straight = |leg: usize| {
            let c = connector_lane(leg, Movement::Straight);
            vec![inbound_lane(leg), c, w.lane(c).successors[0]]
        };
        let (r0, r1) = (straight(0), straight(1));
        place_on_route(&mut w, VehicleId(0), r0, inbound_lane(0), 80.0, 8.0, true).unwrap();
        let lane = if other_s < 92.0 { r1[0] } else { r1[1] };
        let s = if other_s < 92.0 { other_s } else { other_s - 92.0 };
        place_on_route(&mut w, VehicleId(1), r1, lane, s, 8.0, true).unwrap();
        w
    }

    #[test]
    fn crossing_vehicle_in_conflict_group_until_it_passes() {
        let w = crossing_pair(80.0);
        let (ctx, g) = classify(&w, VehicleId(0), &w.conflict_points(), 100.0).unwrap();
        assert_eq!(g.conflict.len(), 1);
        assert_eq!(g.conflict[0].kind, ConflictKind::Crossing);
        assert!(ctx.conflict_lanes.contains(&connector_lane(1, Movement::Straight)));
        // 13 m into the east-west connector: past the north-south crossing.
        let w = crossing_pair(105.0);
        let (_, g) = classify(&w, VehicleId(0), &w.conflict_points(), 100.0).unwrap();
        assert!(g.conflict.is_empty());
    }

    #[test]
    fn intents() {
        let mut w = empty(ScenarioKind::Highway);
        place_vehicle(&mut w, VehicleId(0), LaneId(1), 50.0, 20.0, true).unwrap();
        place_vehicle(&mut w, VehicleId(1), LaneId(2), 50.0, 20.0, false).unwrap();
        let i = share_intent(&w, VehicleId(0), IntentHint { reference_speed: 22.0, lane_change: None }).unwrap();
        assert_eq!((i.expected_lane, i.expected_speed), (LaneId(1), 22.0));
        assert_eq!(
            share_intent(&w, VehicleId(1), IntentHint { reference_speed: 1.0, lane_change: None }),
            Err(WorldError::NotCav(VehicleId(1)))
        );
        // After a committed change left, the route starts on the left lane.
        let mut v = w.vehicles[&VehicleId(0)].clone();
        w.commit_lane(&mut v, LaneId(2));
        w.vehicles.insert(v.id, v);
        let i = share_intent(&w, VehicleId(0), IntentHint { reference_speed: 20.0, lane_change: Some(LaneId(2)) }).unwrap();
        assert_eq!(i.expected_lane, LaneId(2));
    }

    #[test]
    fn rendering_rounds_and_is_deterministic() {
        let mut w = empty(ScenarioKind::Highway);
        place_vehicle(&mut w, VehicleId(0), LaneId(1), 50.0, 20.0, true).unwrap();
        place_vehicle(&mut w, VehicleId(1), LaneId(1), 67.3, 18.04, true).unwrap();
        let intents = [Intent { vehicle_id: VehicleId(1), expected_lane: LaneId(1), expected_speed: 18.0 }];
        let a = describe(&w, VehicleId(0), &w.conflict_points(), 100.0, &intents).unwrap();
        let b = describe(&w, VehicleId(0), &w.conflict_points(), 100.0, &intents).unwrap();
        assert_eq!(a, b);
        assert!(a.text.contains("12.3 m ahead"), "{}", a.text);
        assert!(a.text.contains("speed 18.0 m/s; it intends to use lane 1 at 18.0 m/s"));
        assert_eq!(render_facts(&a.facts), a.text);
        assert_eq!(round1(-0.04), "0.0");
    }
}
