//! Random worlds for fuzz-style integration tests.
#![allow(dead_code)]

use codrive_core::config::{ResolvedConfig, ScenarioConfig, ScenarioKind};
use codrive_core::scenario::{build_resolved, connector_lane, inbound_lane, place_on_route};
use codrive_core::world::{LaneId, Movement, VehicleId, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn resolved(kind: ScenarioKind, toml: &str) -> ResolvedConfig {
    ScenarioConfig::from_toml_str(toml).unwrap().resolve(kind).unwrap()
}

pub fn empty_world(kind: ScenarioKind) -> (ResolvedConfig, World) {
    let cfg = resolved(kind, "[traffic]\ncavs = 0\nhdvs = 0");
    let world = build_resolved(&cfg).unwrap();
    (cfg, world)
}

fn random_route(world: &World, rng: &mut ChaCha8Rng) -> Vec<LaneId> {
    if world.kind == ScenarioKind::Intersection {
        let leg = rng.random_range(0..4);
        let movement = [Movement::Straight, Movement::Left, Movement::Right][rng.random_range(0..3)];
        let conn = connector_lane(leg, movement);
        vec![inbound_lane(leg), conn, world.lane(conn).successors[0]]
    } else {
        let lanes: Vec<LaneId> = world.lanes.keys().copied().collect();
        world.lane_chain(lanes[rng.random_range(0..lanes.len())], &[])
    }
}

/// Up to `max_vehicles` vehicles at random places on random routes, with
/// small heading errors; at least one CAV. Bodies may overlap.
pub fn random_world(rng: &mut ChaCha8Rng, max_vehicles: u32) -> (ResolvedConfig, World) {
    let kind = [ScenarioKind::Highway, ScenarioKind::Merge, ScenarioKind::Intersection][rng.random_range(0..3)];
    let (cfg, mut world) = empty_world(kind);
    let n = rng.random_range(1..=max_vehicles);
    for i in 0..n {
        let route = random_route(&world, rng);
        let lane = route[rng.random_range(0..route.len())];
        let s = rng.random_range(0.0..world.lane(lane).length());
        let speed = rng.random_range(0.0..16.0);
        let is_cav = i == 0 || rng.random_bool(0.5);
        place_on_route(&mut world, VehicleId(i + 1), route, lane, s, speed, is_cav).unwrap();
        let v = world.vehicles.get_mut(&VehicleId(i + 1)).unwrap();
        v.heading += rng.random_range(-0.15..0.15);
        v.sync_velocity();
    }
    (cfg, world)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
