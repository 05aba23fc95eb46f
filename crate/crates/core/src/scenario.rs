//! Geometry and traffic layout for the highway, merge and intersection
//! scenarios.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ResolvedConfig, ScenarioConfig, ScenarioKind};
use crate::dynamics::VehicleState;
use crate::error::{HarnessError, WorldError};
use crate::geometry::{arc, Vec2};
use crate::world::{Lane, LaneId, LaneKind, Movement, VehicleId, World, WorldParams};

const SPAWN_ATTEMPTS: usize = 500;
const TURN_SEGMENTS: usize = 12;

/// Builds a world from a config file's contents.
pub fn build_scenario(kind: ScenarioKind, config: &ScenarioConfig) -> Result<World, HarnessError> {
    let resolved = config.resolve(kind)?;
    Ok(build_resolved(&resolved)?)
}

pub fn build_resolved(cfg: &ResolvedConfig) -> Result<World, WorldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = WorldParams::from_config(cfg);
    match cfg.kind {
        ScenarioKind::Highway => {
            let (lanes, spawn) = highway_lanes(cfg)?;
            let mut world = World::new(cfg.kind, lanes, cfg.dt, params)?;
            let plan: Vec<Vec<LaneId>> = (0..cfg.traffic.cavs + cfg.traffic.hdvs).map(|_| spawn.clone()).collect();
            populate(&mut world, cfg, &plan, &mut rng)?;
            Ok(world)
        }
        ScenarioKind::Merge => {
            let lanes = merge_lanes(cfg)?;
            let mut world = World::new(cfg.kind, lanes, cfg.dt, params)?;
            let all = vec![MERGE_LEFT, MERGE_RIGHT_UP, MERGE_RAMP];
            let n = cfg.traffic.cavs + cfg.traffic.hdvs;
            let plan: Vec<Vec<LaneId>> = (0..n)
                .map(|i| match i {
                    0 if cfg.traffic.cavs > 0 => vec![MERGE_RAMP],
                    1 if cfg.traffic.cavs > 1 => vec![MERGE_RIGHT_UP],
                    _ => all.clone(),
                })
                .collect();
            populate(&mut world, cfg, &plan, &mut rng)?;
            Ok(world)
        }
        ScenarioKind::Intersection => {
            let lanes = intersection_lanes(cfg)?;
            let mut world = World::new(cfg.kind, lanes, cfg.dt, params)?;
            let n = cfg.traffic.cavs + cfg.traffic.hdvs;
            let plan: Vec<Vec<LaneId>> = (0..n).map(|i| vec![inbound_lane(i % 4)]).collect();
            populate(&mut world, cfg, &plan, &mut rng)?;
            Ok(world)
        }
    }
}

fn highway_lanes(cfg: &ResolvedConfig) -> Result<(Vec<Lane>, Vec<LaneId>), WorldError> {
    let g = &cfg.geometry;
    let n = g.highway_lanes as u32;
    let mut lanes = Vec::new();
    for i in 0..n {
        let y = i as f64 * g.lane_width;
        let mut lane = Lane::new(
            LaneId(i),
            vec![Vec2::new(0.0, y), Vec2::new(g.highway_length, y)],
            g.lane_width,
            LaneKind::Through,
        )?;
        if i + 1 < n {
            lane.left = vec![LaneId(i + 1)];
        }
        if i > 0 {
            lane.right = vec![LaneId(i - 1)];
        }
        lanes.push(lane);
    }
    let spawn = (0..n).map(LaneId).collect();
    Ok((lanes, spawn))
}

pub const MERGE_LEFT: LaneId = LaneId(0);
pub const MERGE_RIGHT_UP: LaneId = LaneId(1);
pub const MERGE_RIGHT_DOWN: LaneId = LaneId(2);
pub const MERGE_RAMP: LaneId = LaneId(3);

fn merge_lanes(cfg: &ResolvedConfig) -> Result<Vec<Lane>, WorldError> {
    let g = &cfg.geometry;
    let w = g.lane_width;
    let jx = g.merge_junction_x;
    let mut left = Lane::new(MERGE_LEFT, vec![Vec2::new(0.0, w), Vec2::new(g.merge_length, w)], w, LaneKind::Through)?;
    left.right = vec![MERGE_RIGHT_UP, MERGE_RIGHT_DOWN];
    let mut up = Lane::new(MERGE_RIGHT_UP, vec![Vec2::new(0.0, 0.0), Vec2::new(jx, 0.0)], w, LaneKind::Through)?;
    up.successors = vec![MERGE_RIGHT_DOWN];
    up.left = vec![MERGE_LEFT];
    let mut down = Lane::new(
        MERGE_RIGHT_DOWN,
        vec![Vec2::new(jx, 0.0), Vec2::new(g.merge_length, 0.0)],
        w,
        LaneKind::Through,
    )?;
    down.left = vec![MERGE_LEFT];
    // The ramp runs parallel, then converges over the last 80 m.
    let bend = (jx - 80.0).max(jx * 0.5);
    let mut ramp = Lane::new(
        MERGE_RAMP,
        vec![Vec2::new(0.0, -g.ramp_offset), Vec2::new(bend, -g.ramp_offset), Vec2::new(jx, 0.0)],
        w,
        LaneKind::MergeRamp,
    )?;
    ramp.successors = vec![MERGE_RIGHT_DOWN];
    Ok(vec![left, up, down, ramp])
}

/// Lane ids for the intersection: legs 0..4 are south, east, north, west.
/// Inbound lanes are 0..4, outbound 4..8, connectors `8 + 3*leg + turn`.
pub fn inbound_lane(leg: usize) -> LaneId {
    LaneId(leg as u32)
}

pub fn outbound_lane(leg: usize) -> LaneId {
    LaneId(4 + leg as u32)
}

pub fn connector_lane(leg: usize, movement: Movement) -> LaneId {
    let turn = match movement {
        Movement::Straight => 0,
        Movement::Left => 1,
        Movement::Right => 2,
    };
    LaneId(8 + 3 * leg as u32 + turn)
}

fn intersection_lanes(cfg: &ResolvedConfig) -> Result<Vec<Lane>, WorldError> {
    let g = &cfg.geometry;
    let w = g.lane_width;
    let off = w / 2.0;
    let b = g.box_half_size;
    let leg = g.leg_length;
    let rot = |p: Vec2, k: usize| p.rotate(FRAC_PI_2 * k as f64);
    let mut lanes = Vec::new();
    for k in 0..4 {
        let mut inbound = Lane::new(
            inbound_lane(k),
            vec![rot(Vec2::new(off, -leg), k), rot(Vec2::new(off, -b), k)],
            w,
            LaneKind::IntersectionApproach,
        )?;
        inbound.successors = vec![
            connector_lane(k, Movement::Straight),
            connector_lane(k, Movement::Left),
            connector_lane(k, Movement::Right),
        ];
        lanes.push(inbound);
        lanes.push(Lane::new(
            outbound_lane(k),
            vec![rot(Vec2::new(-off, -b), k), rot(Vec2::new(-off, -leg), k)],
            w,
            LaneKind::IntersectionExit,
        )?);
    }
    for k in 0..4 {
        let start = rot(Vec2::new(off, -b), k);
        // Straight goes to the opposite leg, right to the next leg
        // counter-clockwise, left to the next leg clockwise.
        for movement in [Movement::Straight, Movement::Left, Movement::Right] {
            let exit_leg = match movement {
                Movement::Straight => (k + 2) % 4,
                Movement::Left => (k + 3) % 4,
                Movement::Right => (k + 1) % 4,
            };
            let end = rot(Vec2::new(-off, -b), exit_leg);
            let points = match movement {
                Movement::Straight => vec![start, end],
                Movement::Left => arc(rot(Vec2::new(-b, -b), k), start, end, TURN_SEGMENTS),
                Movement::Right => arc(rot(Vec2::new(b, -b), k), start, end, TURN_SEGMENTS),
            };
            let mut lane = Lane::new(connector_lane(k, movement), points, w, LaneKind::IntersectionConnector)?;
            lane.movement = movement;
            lane.successors = vec![outbound_lane(exit_leg)];
            lanes.push(lane);
        }
    }
    Ok(lanes)
}

/// Places vehicles; entry `i` of `plan` lists the lanes vehicle `i` may
/// spawn on. The first `cavs` vehicles are CAVs.
fn populate(world: &mut World, cfg: &ResolvedConfig, plan: &[Vec<LaneId>], rng: &mut ChaCha8Rng) -> Result<(), WorldError> {
    let t = &cfg.traffic;
    let length = cfg.vehicle.length;
    let mut placed: Vec<(LaneId, f64)> = Vec::new();
    for (i, choices) in plan.iter().enumerate() {
        let mut ok = None;
        for _ in 0..SPAWN_ATTEMPTS {
            let lane_id = choices[rng.random_range(0..choices.len())];
            let lane = world.lane(lane_id);
            let hi = t.spawn_max.min(lane.length() - length);
            if hi < t.spawn_min {
                continue;
            }
            let s = if hi > t.spawn_min { rng.random_range(t.spawn_min..=hi) } else { hi };
            let clear = placed
                .iter()
                .all(|(l, ps)| *l != lane_id || (s - ps).abs() - length >= t.min_gap);
            if clear {
                ok = Some((lane_id, s));
                break;
            }
        }
        let (lane_id, s) = ok.ok_or(WorldError::Spawn { index: i, attempts: SPAWN_ATTEMPTS })?;
        placed.push((lane_id, s));
        let speed = if t.speed_max > t.speed_min { rng.random_range(t.speed_min..=t.speed_max) } else { t.speed_min };
        let route = match cfg.kind {
            ScenarioKind::Intersection => {
                let leg = lane_id.0 as usize;
                let movement = [Movement::Straight, Movement::Left, Movement::Right][rng.random_range(0..3)];
                let connector = connector_lane(leg, movement);
                let exit = world.lane(connector).successors[0];
                vec![lane_id, connector, exit]
            }
            _ => world.lane_chain(lane_id, &[]),
        };
        let lane = world.lane(lane_id);
        let p = lane.centerline.point_at(s);
        let heading = lane.centerline.heading_at(s);
        world.insert_vehicle(VehicleState {
            id: VehicleId(i as u32),
            x: p.x,
            y: p.y,
            vx: 0.0,
            vy: 0.0,
            speed,
            heading,
            lane_id,
            route,
            length,
            is_cav: i < t.cavs,
        })?;
    }
    Ok(())
}

/// Puts a vehicle on `lane` at arc length `s`, aligned with the lane, with
/// the lane chain from there as its route.
pub fn place_vehicle(world: &mut World, id: VehicleId, lane: LaneId, s: f64, speed: f64, is_cav: bool) -> Result<(), WorldError> {
    let route = world.lane_chain(lane, &[]);
    place_on_route(world, id, route, lane, s, speed, is_cav)
}

pub fn place_on_route(
    world: &mut World,
    id: VehicleId,
    route: Vec<LaneId>,
    lane: LaneId,
    s: f64,
    speed: f64,
    is_cav: bool,
) -> Result<(), WorldError> {
    let line = &world.lanes.get(&lane).ok_or_else(|| WorldError::Geometry(format!("unknown lane {lane}")))?.centerline;
    let p = line.point_at(s);
    let heading = line.heading_at(s);
    let length = world.params.vehicle_length;
    world.insert_vehicle(VehicleState {
        id,
        x: p.x,
        y: p.y,
        vx: 0.0,
        vy: 0.0,
        speed,
        heading,
        lane_id: lane,
        route,
        length,
        is_cav,
    })
}
