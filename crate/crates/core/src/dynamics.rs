//! Vehicle dynamics: IDM car following and MOBIL lane changes for
//! human-driven vehicles, proportional control and kinematic bicycle
//! integration for every vehicle.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DynamicsError, WorldError};
use crate::geometry::wrap_angle;
use crate::world::{LaneId, Side, VehicleId, World};

/// Kinematic state of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub speed: f64,
    pub heading: f64,
    /// Lane the vehicle is currently assigned to (the target lane while a
    /// lane change is in progress).
    pub lane_id: LaneId,
    /// Full route, including lanes already driven. `lane_id` is in it.
    pub route: Vec<LaneId>,
    /// Vehicle length, also used as the wheelbase.
    pub length: f64,
    pub is_cav: bool,
}

impl VehicleState {
    pub fn position(&self) -> crate::geometry::Vec2 {
        crate::geometry::Vec2::new(self.x, self.y)
    }

    /// Re-derives (vx, vy) from speed and heading.
    pub fn sync_velocity(&mut self) {
        self.vx = self.speed * self.heading.cos();
        self.vy = self.speed * self.heading.sin();
    }

    pub fn route_index(&self) -> usize {
        self.route.iter().position(|l| *l == self.lane_id).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmParams {
    /// a_max (m/s²)
    pub max_accel: f64,
    /// a_dd (m/s²)
    pub comfort_decel: f64,
    /// v_d (m/s)
    pub desired_speed: f64,
    /// δ
    pub exponent: f64,
    /// s0 (m)
    pub min_gap: f64,
    /// T_g (s)
    pub time_headway: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            max_accel: 3.0,
            comfort_decel: 3.0,
            desired_speed: 10.0,
            exponent: 4.0,
            min_gap: 2.0,
            time_headway: 1.5,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.max_accel > 0.0
            && self.comfort_decel > 0.0
            && self.desired_speed > 0.0
            && self.exponent > 0.0
            && self.min_gap >= 0.0
            && self.time_headway >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!("IDM parameters out of range: {self:?}")))
        }
    }

    /// Desired dynamic gap s*.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        self.min_gap + v * self.time_headway + v * dv / (2.0 * (self.max_accel * self.comfort_decel).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilParams {
    /// p, in [0, 1].
    pub politeness: f64,
    /// Δa_th (m/s²)
    pub threshold: f64,
    /// b_safe (m/s²)
    pub safe_decel: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self { politeness: 0.5, threshold: 0.2, safe_decel: 2.0 }
    }
}

impl MobilParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if (0.0..=1.0).contains(&self.politeness) && self.threshold >= 0.0 && self.safe_decel > 0.0 {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!("MOBIL parameters out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    /// Longitudinal gain (1/s).
    pub kp: f64,
    /// Heading gain.
    pub kh: f64,
}

impl ControlGains {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.kp > 0.0 && self.kh > 0.0 {
            Ok(())
        } else {
            Err(ConfigError::Invalid("control gains must be positive".into()))
        }
    }
}

/// Actuation bounds shared by the controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLimits {
    pub max_accel: f64,
    pub brake_cap: f64,
    /// Speed floor in the steering law, guarding the v → 0 singularity.
    pub v_floor: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self { max_accel: 3.0, brake_cap: 5.0, v_floor: 0.5 }
    }
}

impl ControlLimits {
    pub fn clamp_accel(&self, a: f64) -> f64 {
        a.clamp(-self.brake_cap, self.max_accel)
    }
}

/// IDM acceleration. Pass `gap = f64::INFINITY` and `dv = 0` when there is
/// no leader. `dv` is the approach rate (own speed minus leader speed).
pub fn idm_acceleration(gap: f64, v: f64, dv: f64, params: &IdmParams, brake_cap: f64) -> Result<f64, DynamicsError> {
    if !(gap > 0.0) {
        return Err(DynamicsError::Overlap(gap));
    }
    let free = 1.0 - (v / params.desired_speed).powf(params.exponent);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        (params.desired_gap(v, dv) / gap).powi(2)
    };
    let a = params.max_accel * (free - interaction);
    Ok(a.clamp(-brake_cap, params.max_accel))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneChangeVerdict {
    Accept,
    Reject,
}

/// Acceleration of one vehicle before and after a candidate lane change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelPair {
    pub before: f64,
    pub after: f64,
}

impl AccelPair {
    pub fn new(before: f64, after: f64) -> Self {
        Self { before, after }
    }

    pub fn delta(&self) -> f64 {
        self.after - self.before
    }
}

/// MOBIL incentive value for a candidate change.
pub fn mobil_incentive(ego_gain: f64, new_follower: AccelPair, old_follower: AccelPair, params: &MobilParams) -> f64 {
    ego_gain + params.politeness * (new_follower.delta() + old_follower.delta())
}

/// Accepts a lane change iff the new follower is not forced to brake harder
/// than `safe_decel` and the politeness-weighted gain clears the threshold.
pub fn mobil_decide(ego_gain: f64, new_follower: AccelPair, old_follower: AccelPair, params: &MobilParams) -> LaneChangeVerdict {
    let safe = new_follower.after >= -params.safe_decel;
    let incentive = mobil_incentive(ego_gain, new_follower, old_follower, params) >= params.threshold;
    if safe && incentive {
        LaneChangeVerdict::Accept
    } else {
        LaneChangeVerdict::Reject
    }
}

/// Proportional speed tracking, clamped to the actuation limits.
pub fn longitudinal_control(v_ref: f64, v: f64, gains: &ControlGains, limits: &ControlLimits) -> f64 {
    limits.clamp_accel(gains.kp * (v_ref - v))
}

/// Front-wheel angle steering the heading toward `heading_ref`.
pub fn lateral_control(heading_ref: f64, heading: f64, v: f64, length: f64, gains: &ControlGains, v_floor: f64) -> f64 {
    let err = wrap_angle(heading_ref - heading);
    let arg = gains.kh * err * length / (2.0 * v.max(v_floor));
    arg.clamp(-1.0, 1.0).asin()
}

/// One forward-Euler step of the kinematic bicycle model.
pub fn bicycle_step(state: &VehicleState, accel: f64, steer: f64, dt: f64) -> VehicleState {
    let beta = (0.5 * steer.tan()).atan();
    let v = state.speed;
    let mut next = state.clone();
    next.x = state.x + v * (state.heading + beta).cos() * dt;
    next.y = state.y + v * (state.heading + beta).sin() * dt;
    next.heading = state.heading + v / state.length * beta.sin() * dt;
    next.speed = (v + accel * dt).max(0.0);
    next.sync_velocity();
    next
}

/// Command produced for one human-driven vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdvCommand {
    pub accel: f64,
    pub steer: f64,
    pub target_lane: LaneId,
}

fn idm_or_brake(gap: f64, v: f64, dv: f64, idm: &IdmParams, brake_cap: f64) -> f64 {
    idm_acceleration(gap, v, dv, idm, brake_cap).unwrap_or(-brake_cap)
}

/// IDM longitudinal command against the current leader plus a MOBIL lane
/// choice over the adjacent lanes; steering tracks the chosen lane.
pub fn hdv_policy(world: &World, hdv_id: VehicleId, idm: &IdmParams, mobil: &MobilParams) -> Result<HdvCommand, WorldError> {
    let ego = world.vehicle(hdv_id).ok_or(WorldError::NoSuchVehicle(hdv_id))?;
    if ego.is_cav {
        return Err(WorldError::NotCav(hdv_id));
    }
    let limits = world.params.limits;
    let cap = limits.brake_cap;
    let accel_behind = |leader: Option<(f64, f64)>, v: f64| match leader {
        Some((gap, lv)) => idm_or_brake(gap, v, v - lv, idm, cap),
        None => idm_or_brake(f64::INFINITY, v, 0.0, idm, cap),
    };

    let current_leader = world.leader_of(ego).map(|n| (n.gap, n.speed));
    let a_current = accel_behind(current_leader, ego.speed);

    let mut target = ego.lane_id;
    let mut best_incentive = f64::NEG_INFINITY;
    let mut tied = false;
    let settled = world.lateral_offset(ego).abs() < 0.5;
    if settled {
        for side in [Side::Left, Side::Right] {
            let Some(lane) = world.adjacent_lane(ego, side) else { continue };
            let (leader, follower) = world.neighbors_in_lane(ego, lane);
            if leader.as_ref().is_some_and(|l| l.gap <= idm.min_gap)
                || follower.as_ref().is_some_and(|f| f.gap <= idm.min_gap)
            {
                continue;
            }
            let a_ego_after = accel_behind(leader.as_ref().map(|l| (l.gap, l.speed)), ego.speed);
            let new_follower = match &follower {
                Some(f) => {
                    let fv = world.vehicle(f.id).map(|v| v.speed).unwrap_or(0.0);
                    let before = accel_behind(
                        leader.as_ref().map(|l| (l.gap + f.gap + ego.length, l.speed)),
                        fv,
                    );
                    let after = accel_behind(Some((f.gap, ego.speed)), fv);
                    AccelPair::new(before, after)
                }
                None => AccelPair::new(0.0, 0.0),
            };
            let old_follower = match world.follower_of(ego) {
                Some(f) => {
                    let fv = world.vehicle(f.id).map(|v| v.speed).unwrap_or(0.0);
                    let before = accel_behind(Some((f.gap, ego.speed)), fv);
                    let after = accel_behind(current_leader.map(|(g, s)| (g + f.gap + ego.length, s)), fv);
                    AccelPair::new(before, after)
                }
                None => AccelPair::new(0.0, 0.0),
            };
            let gain = a_ego_after - a_current;
            if mobil_decide(gain, new_follower, old_follower, mobil) == LaneChangeVerdict::Accept {
                let incentive = mobil_incentive(gain, new_follower, old_follower, mobil);
                if incentive > best_incentive {
                    best_incentive = incentive;
                    target = lane;
                    tied = false;
                } else if incentive == best_incentive {
                    tied = true;
                }
            }
        }
    }
    if tied {
        target = ego.lane_id;
    }

    let heading_ref = world.reference_heading(ego, target);
    let steer = lateral_control(heading_ref, ego.heading, ego.speed, ego.length, &world.params.gains, limits.v_floor);
    Ok(HdvCommand { accel: a_current, steer, target_lane: target })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_idm() -> IdmParams {
        IdmParams {
            max_accel: 3.0,
            comfort_decel: 3.0,
            desired_speed: 10.0,
            exponent: 4.0,
            min_gap: 2.0,
            time_headway: 1.5,
        }
    }

    #[test]
    fn idm_free_road_cases() {
        let p = example_idm();
        assert_eq!(idm_acceleration(f64::INFINITY, 10.0, 0.0, &p, 5.0).unwrap(), 0.0);
        assert_eq!(idm_acceleration(f64::INFINITY, 0.0, 0.0, &p, 5.0).unwrap(), 3.0);
    }

    #[test]
    fn idm_hand_evaluated_example() {
        // s* = 2 + 5*1.5 + 5*2/(2*3) = 11.1667; a = 3[1 - 0.0625 - (11.1667/20)^2]
        let p = example_idm();
        assert!((p.desired_gap(5.0, 2.0) - 11.166_666_666_666_666).abs() < 1e-12);
        let a = idm_acceleration(20.0, 5.0, 2.0, &p, 5.0).unwrap();
        assert!((a - 1.877_291_666_666_666_7).abs() < 1e-12, "{a}");
    }

    #[test]
    fn idm_overlap_is_error() {
        let p = example_idm();
        assert_eq!(idm_acceleration(0.0, 5.0, 0.0, &p, 5.0), Err(DynamicsError::Overlap(0.0)));
        assert!(idm_acceleration(-1.0, 5.0, 0.0, &p, 5.0).is_err());
    }

    #[test]
    fn idm_close_leader_brakes() {
        let p = example_idm();
        let a = idm_acceleration(5.0, 8.0, 0.0, &p, 5.0).unwrap();
        assert!(a < 0.0);
    }

    #[test]
    fn mobil_examples() {
        let p = MobilParams { politeness: 0.5, threshold: 0.2, safe_decel: 2.0 };
        let zero = AccelPair::new(0.0, 0.0);
        assert_eq!(mobil_decide(0.0, zero, zero, &p), LaneChangeVerdict::Reject);
        assert_eq!(mobil_decide(5.0, AccelPair::new(0.0, -3.0), zero, &p), LaneChangeVerdict::Reject);
        let nf = AccelPair::new(-0.3, -0.5);
        let of = AccelPair::new(0.0, 0.1);
        assert!((mobil_incentive(1.0, nf, of, &p) - 0.95).abs() < 1e-12);
        assert_eq!(mobil_decide(1.0, nf, of, &p), LaneChangeVerdict::Accept);
    }

    #[test]
    fn longitudinal_examples() {
        let g = ControlGains { kp: 1.0, kh: 2.0 };
        let l = ControlLimits { max_accel: 3.0, brake_cap: 5.0, v_floor: 0.5 };
        assert_eq!(longitudinal_control(7.0, 7.0, &g, &l), 0.0);
        assert_eq!(longitudinal_control(7.0, 5.0, &g, &l), 2.0);
        assert_eq!(longitudinal_control(0.0, 20.0, &g, &l), -5.0);
    }

    #[test]
    fn lateral_examples() {
        let g = ControlGains { kp: 1.0, kh: 1.0 };
        assert_eq!(lateral_control(0.3, 0.3, 10.0, 4.0, &g, 0.5), 0.0);
        let d = lateral_control(0.1, 0.0, 10.0, 4.0, &g, 0.5);
        assert!((d - 0.02f64.asin()).abs() < 1e-15);
        assert!((d - 0.0200).abs() < 1e-4);
        let d = lateral_control(3.0, 0.0, 0.0, 4.0, &g, 0.5);
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    fn straight_state(v: f64) -> VehicleState {
        let mut s = VehicleState {
            id: VehicleId(0),
            x: 0.0,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
            speed: v,
            heading: 0.0,
            lane_id: LaneId(0),
            route: vec![LaneId(0)],
            length: 4.0,
            is_cav: true,
        };
        s.sync_velocity();
        s
    }

    #[test]
    fn bicycle_straight_advance() {
        let s = bicycle_step(&straight_state(10.0), 0.0, 0.0, 0.1);
        assert!((s.x - 1.0).abs() < 1e-15);
        assert_eq!(s.y, 0.0);
        assert_eq!(s.heading, 0.0);
        assert_eq!(s.speed, 10.0);
    }

    #[test]
    fn bicycle_hand_evaluated_turn() {
        // β = atan(tan(0.1)/2) = 0.0501252..., x = 0.5 cos β, y = 0.5 sin β,
        // φ = (5/4) sin β * 0.1
        let s = bicycle_step(&straight_state(5.0), 0.0, 0.1, 0.1);
        assert!((s.x - 0.499_372).abs() < 1e-6);
        assert!((s.y - 0.025_052).abs() < 1e-6);
        assert!((s.heading - 0.006_263).abs() < 1e-6);
        assert!((s.vx - s.speed * s.heading.cos()).abs() < 1e-12);
    }

    #[test]
    fn bicycle_speed_floor() {
        let s = bicycle_step(&straight_state(0.2), -5.0, 0.0, 0.1);
        assert_eq!(s.speed, 0.0);
    }
}
