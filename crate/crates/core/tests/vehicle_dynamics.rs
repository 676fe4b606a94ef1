//! Single-track geometry, curve speed and lateral acceleration.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crossroads::geom::Polyline;
use crossroads::simcore::single_track::lateral_accel;
use crossroads::simcore::{curve_speed, integrate, run_scenario, BehaviorParams, Integrator, KinematicState, Route, SimConfig, VehicleParams, World};
use crossroads::synth;
use crossroads::trajdata::{AgentKind, Compass};
use crossroads::Vec2d;

/// Max deviation of the trajectory from the analytic circle after `t` seconds.
fn circle_error(integrator: Integrator, dt: f64, t: f64) -> (f64, f64) {
    let (l, delta, v) = (2.8, 0.1f64, 10.0);
    let r = l / delta.tan();
    let center = Vec2d::new(0.0, r);
    let mut s = KinematicState::new(Vec2d::zero(), 0.0, v);
    let mut worst = 0.0f64;
    let mut radii = Vec::new();
    for _ in 0..(t / dt).round() as usize {
        s = integrate(&s, 0.0, delta, l, dt, integrator);
        let d = s.position.dist(center);
        worst = worst.max((d - r).abs());
        radii.push(d);
    }
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    (worst, mean)
}

#[test]
fn constant_steering_traces_the_analytic_circle() {
    let r = 2.8 / 0.1f64.tan();
    assert!((r - 27.907).abs() < 1e-3);
    for integrator in [Integrator::Euler, Integrator::Heun] {
        let (_, mean) = circle_error(integrator, 0.01, 20.0);
        assert!((mean - r).abs() / r < 0.005, "{integrator}: mean radius {mean} vs {r}");
    }
}

#[test]
fn heun_beats_euler_on_the_circle() {
    for dt in [0.1, 0.05, 0.02, 0.01] {
        let (e, _) = circle_error(Integrator::Euler, dt, 20.0);
        let (h, _) = circle_error(Integrator::Heun, dt, 20.0);
        assert!(h < e, "dt {dt}: heun {h} !< euler {e}");
    }
}

/// 60 m straight, a quarter circle of radius `r`, then 40 m straight.
fn bend(r: f64) -> Polyline<f64> {
    let mut pts: Vec<Vec2d> = (0..=120).map(|i| Vec2d::new(-60.0 + 0.5 * i as f64, 0.0)).collect();
    let n = (r * FRAC_PI_2 / 0.5).ceil() as usize;
    for i in 1..=n {
        let a = -FRAC_PI_2 + FRAC_PI_2 * i as f64 / n as f64;
        pts.push(Vec2d::new(0.0, r) + Vec2d::from_angle(a) * r);
    }
    for i in 1..=80 {
        pts.push(Vec2d::new(r, r + 0.5 * i as f64));
    }
    Polyline::new(pts).unwrap()
}

#[test]
fn curve_entry_speed_settles_at_the_curve_speed() {
    let r = 20.0;
    let params = VehicleParams {
        max_lateral_accel: 2.5,
        ..VehicleParams::car()
    };
    let target = curve_speed(2.5, 1.0 / r);
    assert!((target - 50f64.sqrt()).abs() < 1e-12);
    let route = Route::free(bend(r));
    let mut w = World::new(Arc::new(synth::four_way_space()), BehaviorParams::default());
    w.add_vehicle(1, AgentKind::Car, 1.8, 4.5, KinematicState::new(Vec2d::new(-60.0, 0.0), 0.0, 12.0), route.clone(), Some(0.0), Some(params))
        .unwrap();
    let (log, _) = run_scenario(w, &SimConfig { duration: 25.0, ..Default::default() }).unwrap();
    let rows = log.agent_rows(1);
    let entry = rows.iter().find(|r| r.x >= 0.0).unwrap();
    // the apex sits where the bend has turned 45 degrees
    let apex_y = r * (1.0 - std::f64::consts::FRAC_1_SQRT_2);
    let apex = rows.iter().find(|row| row.y >= apex_y).unwrap();
    for (what, row) in [("entry", entry), ("apex", apex)] {
        assert!((row.v - target).abs() / target < 0.05, "{what} speed {} vs {target}", row.v);
    }
    for row in &rows {
        let a = lateral_accel(row.v, row.delta, params.wheelbase).abs();
        assert!(a <= 1.05 * params.max_lateral_accel, "lateral accel {a} at {row:?}");
    }
}

#[test]
fn lateral_accel_bounded_through_intersection_turns() {
    let space = Arc::new(synth::four_way_space());
    for (entry, exit) in [(Compass::S, Compass::W), (Compass::S, Compass::E), (Compass::W, Compass::N), (Compass::N, Compass::W)] {
        let route = Route::between(&space, AgentKind::Car, entry, exit).unwrap();
        let mut w = World::new(space.clone(), BehaviorParams::default());
        let p0 = route.path.point_at(0.0);
        let state = KinematicState::new(p0, route.path.heading_at(0.0), 12.0);
        w.add_vehicle(1, AgentKind::Car, 1.8, 4.5, state, route.clone(), Some(0.0), None).unwrap();
        let (log, _) = run_scenario(w, &SimConfig { duration: 20.0, ..Default::default() }).unwrap();
        let p = VehicleParams::<f64>::car();
        let rows = log.agent_rows(1);
        assert!(rows.len() > 100);
        for row in &rows {
            let a = lateral_accel(row.v, row.delta, p.wheelbase).abs();
            assert!(a <= 1.05 * p.max_lateral_accel, "{entry}->{exit}: lateral accel {a}");
            let pr = route.path.project(row.position());
            assert!(pr.distance < 0.5 * (synth::LANE_WIDTH - 1.8) + 0.05, "{entry}->{exit}: left lane ({:.3} m off)", pr.distance);
        }
        // the turn is completed
        let last = rows.last().unwrap();
        assert!(route.path.project(last.position()).s > route.length() - 10.0);
    }
}
