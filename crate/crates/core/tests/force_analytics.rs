//! Pedestrian force law against direct evaluation of its formula.

use crossroads::geom::Vec2;
use crossroads::simcore::{pedestrian_force, DiscNeighbor, PedestrianParams};
use crossroads::Vec2d;
use proptest::prelude::*;

/// Direct evaluation of the law for one neighbor, written out independently.
fn oracle(p: &PedestrianParams<f64>, x: Vec2d, v: Vec2d, goal: Vec2d, other: Vec2d, r_other: f64) -> Vec2d {
    let to_goal = goal - x;
    let e = to_goal * (1.0 / (to_goal.x * to_goal.x + to_goal.y * to_goal.y).sqrt());
    let drive = Vec2::new((p.desired_speed * e.x - v.x) / p.relaxation_time, (p.desired_speed * e.y - v.y) / p.relaxation_time);
    let diff = x - other;
    let d = (diff.x * diff.x + diff.y * diff.y).sqrt();
    let mag = p.repulsion_strength * ((p.radius + r_other - d) / p.repulsion_range).exp();
    Vec2::new(drive.x + mag * diff.x / d, drive.y + mag * diff.y / d)
}

#[test]
fn equilibrium_at_desired_velocity() {
    let p = PedestrianParams::<f64>::default();
    for angle in [0.0, 0.7, 2.0, -1.3] {
        let dir = Vec2d::from_angle(angle);
        let f = pedestrian_force(Vec2d::new(3.0, -2.0), dir * p.desired_speed, angle, &p, Vec2d::new(3.0, -2.0) + dir * 20.0, &[], &[]);
        assert!(f.total().norm() < 1e-9, "{:?}", f.total());
    }
}

#[test]
fn rest_state_driving_force_is_v0_over_tau() {
    let p = PedestrianParams::<f64>::default();
    let f = pedestrian_force(Vec2d::zero(), Vec2d::zero(), 0.0, &p, Vec2d::new(0.0, 10.0), &[], &[]);
    assert!((f.driving.norm() - p.desired_speed / p.relaxation_time).abs() < 1e-12);
    assert!((f.driving.norm() - 2.68).abs() < 1e-12);
}

#[test]
fn symmetric_head_on_forces_mirror() {
    let p = PedestrianParams::<f64>::default();
    let a = Vec2d::new(-1.0, 0.0);
    let b = Vec2d::new(1.0, 0.0);
    let v = Vec2d::new(1.2, 0.0);
    let fa = pedestrian_force(a, v, 0.0, &p, Vec2d::new(10.0, 0.0), &[DiscNeighbor { position: b, radius: p.radius }], &[]);
    let fb = pedestrian_force(b, -v, std::f64::consts::PI, &p, Vec2d::new(-10.0, 0.0), &[DiscNeighbor { position: a, radius: p.radius }], &[]);
    assert!((fa.total() + fb.total()).norm() < 1e-9);
    assert!((fa.interaction.norm() - fb.interaction.norm()).abs() < 1e-9);
    let expect = p.repulsion_strength * ((2.0 * p.radius - 2.0) / p.repulsion_range).exp();
    assert!((fa.interaction.norm() - expect).abs() < 1e-9);
    assert!(fa.interaction.x < 0.0, "repulsion points away from the neighbor");
}

proptest! {
    #[test]
    fn force_matches_formula(
        x in -20.0..20.0f64, y in -20.0..20.0f64,
        vx in -2.0..2.0f64, vy in -2.0..2.0f64,
        gx in -20.0..20.0f64, gy in -20.0..20.0f64,
        ox in -20.0..20.0f64, oy in -20.0..20.0f64,
        ro in 0.1..1.5f64,
    ) {
        let pos = Vec2d::new(x, y);
        let goal = Vec2d::new(gx, gy);
        let other = Vec2d::new(ox, oy);
        prop_assume!(pos.dist(goal) > 1e-3 && pos.dist(other) > 0.05);
        let p = PedestrianParams::<f64>::default();
        let f = pedestrian_force(pos, Vec2d::new(vx, vy), 0.0, &p, goal, &[DiscNeighbor { position: other, radius: ro }], &[]);
        let o = oracle(&p, pos, Vec2d::new(vx, vy), goal, other, ro);
        let scale = 1.0 + o.norm();
        prop_assert!((f.total() - o).norm() <= 1e-12 * scale, "{:?} vs {:?}", f.total(), o);
    }

    #[test]
    fn force_is_translation_invariant(dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
        let p = PedestrianParams::<f64>::default();
        let t = Vec2d::new(dx, dy);
        let n = |o: Vec2d| [DiscNeighbor { position: o, radius: 0.3 }];
        let f0 = pedestrian_force(Vec2d::new(0.5, 0.2), Vec2d::new(0.3, 0.1), 0.1, &p, Vec2d::new(5.0, 5.0), &n(Vec2d::new(1.0, 0.0)), &[]);
        let f1 = pedestrian_force(Vec2d::new(0.5, 0.2) + t, Vec2d::new(0.3, 0.1), 0.1, &p, Vec2d::new(5.0, 5.0) + t, &n(Vec2d::new(1.0, 0.0) + t), &[]);
        prop_assert!((f0.total() - f1.total()).norm() < 1e-9);
    }
}
