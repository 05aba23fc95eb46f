use codrive_core::config::{ScenarioConfig, ScenarioKind};
use codrive_core::scenario::{
    build_resolved, connector_lane, inbound_lane, place_on_route, place_vehicle, MERGE_RAMP, MERGE_RIGHT_DOWN, MERGE_RIGHT_UP,
};
use codrive_core::world::{Movement, VehicleId, World};

fn empty(kind: ScenarioKind) -> World {
    let cfg = ScenarioConfig::from_toml_str("[traffic]\ncavs = 0\nhdvs = 0").unwrap().resolve(kind).unwrap();
    build_resolved(&cfg).unwrap()
}

fn route_through(world: &World, leg: usize, movement: Movement) -> Vec<codrive_core::LaneId> {
    let conn = connector_lane(leg, movement);
    vec![inbound_lane(leg), conn, world.lane(conn).successors[0]]
}

#[test]
fn ramp_vehicle_near_junction_leads_mainline() {
    let mut w = empty(ScenarioKind::Merge);
    let ramp_len = w.lane(MERGE_RAMP).length();
    place_on_route(&mut w, VehicleId(1), vec![MERGE_RAMP, MERGE_RIGHT_DOWN], MERGE_RAMP, ramp_len - 3.0, 10.0, true).unwrap();
    place_vehicle(&mut w, VehicleId(2), MERGE_RIGHT_UP, 200.0, 10.0, false).unwrap();
    let main = w.vehicle(VehicleId(2)).unwrap();
    assert_eq!(w.leader_of(main).map(|n| n.id), Some(VehicleId(1)));
    // Frames are per route: the ramp vehicle only sees mainline cars that
    // are already alongside the converging stretch.
    assert!(w.follower_of(w.vehicle(VehicleId(1)).unwrap()).is_none());
    let mut w = empty(ScenarioKind::Merge);
    place_on_route(&mut w, VehicleId(1), vec![MERGE_RAMP, MERGE_RIGHT_DOWN], MERGE_RAMP, ramp_len - 3.0, 10.0, true).unwrap();
    place_vehicle(&mut w, VehicleId(2), MERGE_RIGHT_UP, 220.0, 10.0, false).unwrap();
    assert_eq!(w.follower_of(w.vehicle(VehicleId(1)).unwrap()).map(|n| n.id), Some(VehicleId(2)));
}

#[test]
fn ramp_vehicle_far_from_junction_is_ignored() {
    let mut w = empty(ScenarioKind::Merge);
    place_on_route(&mut w, VehicleId(1), vec![MERGE_RAMP, MERGE_RIGHT_DOWN], MERGE_RAMP, 60.0, 10.0, true).unwrap();
    place_vehicle(&mut w, VehicleId(2), MERGE_RIGHT_UP, 20.0, 10.0, false).unwrap();
    assert!(w.leader_of(w.vehicle(VehicleId(2)).unwrap()).is_none());
}

#[test]
fn diverging_vehicle_leads_until_clear() {
    let mut w = empty(ScenarioKind::Intersection);
    let straight = route_through(&w, 0, Movement::Straight);
    let left = route_through(&w, 0, Movement::Left);
    let inbound_len = w.lane(inbound_lane(0)).length();
    place_on_route(&mut w, VehicleId(1), straight, inbound_lane(0), inbound_len - 15.0, 8.0, true).unwrap();
    place_on_route(&mut w, VehicleId(2), left.clone(), left[1], 2.0, 3.0, true).unwrap();
    let back = w.vehicle(VehicleId(1)).unwrap();
    let lead = w.leader_of(back).expect("the turning vehicle is still in the way");
    assert_eq!(lead.id, VehicleId(2));
    // The turner has the inbound lane on its own route.
    assert_eq!(w.follower_of(w.vehicle(VehicleId(2)).unwrap()).map(|n| n.id), Some(VehicleId(1)));

    let mut w = empty(ScenarioKind::Intersection);
    let straight = route_through(&w, 0, Movement::Straight);
    place_on_route(&mut w, VehicleId(1), straight, inbound_lane(0), inbound_len - 15.0, 8.0, true).unwrap();
    let conn_len = w.lane(left[1]).length();
    place_on_route(&mut w, VehicleId(2), left.clone(), left[1], conn_len - 2.0, 3.0, true).unwrap();
    assert!(w.leader_of(w.vehicle(VehicleId(1)).unwrap()).is_none());
}

#[test]
fn following_speed_stops_behind_stopped_leader() {
    let mut w = empty(ScenarioKind::Merge);
    place_vehicle(&mut w, VehicleId(1), MERGE_RIGHT_UP, 50.0, 10.0, true).unwrap();
    place_vehicle(&mut w, VehicleId(2), MERGE_RIGHT_UP, 90.0, 0.0, false).unwrap();
    let dt = 0.1;
    let ego = w.vehicle(VehicleId(1)).unwrap();
    let gap = w.leader_of(ego).unwrap().gap;
    let v = w.following_speed(ego, dt);
    // One step at v, then a comfortable stop, ends exactly at the minimum gap.
    let b = w.params.idm.comfort_decel;
    let travel = v * dt + v * v / (2.0 * b);
    assert!((travel - (gap - w.params.idm.min_gap)).abs() < 1e-9, "{travel} vs {gap}");
    // No leader: unconstrained.
    assert!(w.following_speed(w.vehicle(VehicleId(2)).unwrap(), dt).is_infinite());
}

#[test]
fn curve_speed_caps_only_near_turns() {
    let mut w = empty(ScenarioKind::Intersection);
    let left = route_through(&w, 0, Movement::Left);
    place_on_route(&mut w, VehicleId(1), left.clone(), inbound_lane(0), 1.0, 5.0, true).unwrap();
    place_on_route(&mut w, VehicleId(2), left.clone(), left[1], 0.5, 5.0, true).unwrap();
    assert!(w.curve_speed(w.vehicle(VehicleId(1)).unwrap()).is_infinite());
    // Left arcs have radius box + lane offset = 14 m.
    let cap = w.curve_speed(w.vehicle(VehicleId(2)).unwrap());
    let nominal = (w.params.lateral_accel * 14.0f64).sqrt();
    assert!((cap - nominal).abs() / nominal < 0.1, "{cap} vs {nominal}");
}
