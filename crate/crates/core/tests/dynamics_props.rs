use std::f64::consts::FRAC_PI_2;

use codrive_core::dynamics::{
    bicycle_step, idm_acceleration, lateral_control, mobil_decide, AccelPair, ControlGains, IdmParams, MobilParams, VehicleState,
};
use codrive_core::world::{LaneId, VehicleId};
use proptest::prelude::*;

fn idm() -> impl Strategy<Value = IdmParams> {
    (0.5..4.0f64, 0.5..4.0f64, 5.0..30.0f64, 1.0..6.0f64, 0.5..4.0f64, 0.5..2.5f64).prop_map(
        |(max_accel, comfort_decel, desired_speed, exponent, min_gap, time_headway)| IdmParams {
            max_accel,
            comfort_decel,
            desired_speed,
            exponent,
            min_gap,
            time_headway,
        },
    )
}

fn state(speed: f64, heading: f64) -> VehicleState {
    let mut s = VehicleState {
        id: VehicleId(0),
        x: 3.0,
        y: -1.0,
        vx: 0.0,
        vy: 0.0,
        speed,
        heading,
        lane_id: LaneId(0),
        route: vec![LaneId(0)],
        length: 5.0,
        is_cav: true,
    };
    s.sync_velocity();
    s
}

proptest! {
    #[test]
    fn idm_decreasing_in_speed(p in idm(), f1 in 0.0..1.0f64, f2 in 0.0..1.0f64) {
        let (lo, hi) = (f1.min(f2) * p.desired_speed, f1.max(f2) * p.desired_speed);
        let a_lo = idm_acceleration(f64::INFINITY, lo, 0.0, &p, 1e9).unwrap();
        let a_hi = idm_acceleration(f64::INFINITY, hi, 0.0, &p, 1e9).unwrap();
        prop_assert!(a_lo >= a_hi);
    }

    #[test]
    fn idm_increasing_in_gap(p in idm(), v in 0.0..30.0f64, dv in -5.0..5.0f64, s1 in 0.1..200.0f64, s2 in 0.1..200.0f64) {
        let (near, far) = (s1.min(s2), s1.max(s2));
        let a_near = idm_acceleration(near, v, dv, &p, 9.0).unwrap();
        let a_far = idm_acceleration(far, v, dv, &p, 9.0).unwrap();
        prop_assert!(a_far >= a_near);
    }

    #[test]
    fn idm_zero_at_equilibrium(p in idm(), f in 0.05..0.95f64) {
        let v = f * p.desired_speed;
        let s_star = p.min_gap + v * p.time_headway;
        let s = s_star / (1.0 - (v / p.desired_speed).powf(p.exponent)).sqrt();
        let a = idm_acceleration(s, v, 0.0, &p, 9.0).unwrap();
        prop_assert!(a.abs() < 1e-9, "{}", a);
    }

    #[test]
    fn mobil_only_sees_deltas(
        gain in -3.0..3.0f64,
        n in (-4.0..2.0f64, -4.0..2.0f64),
        o in (-4.0..2.0f64, -4.0..2.0f64),
        shift in -1.0..1.0f64,
        p in 0.0..1.0f64,
    ) {
        // The safety bound reads the new follower's absolute acceleration,
        // so shifts that carry it across the bound are excluded.
        let params = MobilParams { politeness: p, threshold: 0.2, safe_decel: 2.0 };
        prop_assume!((n.1 >= -2.0) == (n.1 + shift >= -2.0));
        let a = mobil_decide(gain, AccelPair::new(n.0, n.1), AccelPair::new(o.0, o.1), &params);
        let b = mobil_decide(gain, AccelPair::new(n.0 + shift, n.1 + shift), AccelPair::new(o.0 + shift, o.1 + shift), &params);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bicycle_conserves(v in 0.0..30.0f64, phi in -3.0..3.0f64, a in -5.0..3.0f64, delta in -0.6..0.6f64, dt in 0.01..0.2f64) {
        let s = state(v, phi);
        prop_assert_eq!(bicycle_step(&s, a, 0.0, dt).heading, phi);
        prop_assert_eq!(bicycle_step(&s, 0.0, delta, dt).speed, v);
    }

    #[test]
    fn steering_bounded(r in -50.0..50.0f64, h in -50.0..50.0f64, v in -5.0..40.0f64, kh in 0.1..50.0f64) {
        let d = lateral_control(r, h, v, 5.0, &ControlGains { kp: 1.0, kh }, 0.5);
        prop_assert!(d.is_finite() && d.abs() <= FRAC_PI_2);
    }
}

/// Distance between one step of `dt` and two steps of `dt/2`.
fn split_error(dt: f64) -> f64 {
    let s = state(12.0, 0.3);
    let (a, d) = (1.5, 0.25);
    let one = bicycle_step(&s, a, d, dt);
    let two = bicycle_step(&bicycle_step(&s, a, d, dt / 2.0), a, d, dt / 2.0);
    ((one.x - two.x).powi(2) + (one.y - two.y).powi(2) + (one.heading - two.heading).powi(2)).sqrt()
}

#[test]
fn bicycle_step_is_second_order_locally() {
    let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|dt| split_error(*dt)).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..4.5).contains(&ratio), "errors {e:?}");
    }
}
