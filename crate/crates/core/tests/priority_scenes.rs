//! Priority behavior emerging from the yield term in constructed scenes.

use std::sync::Arc;

use crossroads::simcore::{run_scenario, BehaviorParams, ForceTerms, KinematicState, Route, SimConfig, SimLog, VehicleParams, World};
use crossroads::synth;
use crossroads::trajdata::{AgentKind, Compass};

const MINOR: i64 = 1;
const MAJOR: i64 = 2;

fn car(v0: f64) -> VehicleParams<f64> {
    VehicleParams { desired_speed: v0, ..VehicleParams::car() }
}

fn place(world: &mut World, id: i64, entry: Compass, exit: Compass, s: f64, v: f64, v0: f64) -> Arc<Route> {
    let route = Route::between(&world.space, AgentKind::Car, entry, exit).unwrap();
    let p = route.path.point_at(s);
    let state = KinematicState::new(p, route.path.heading_at(s), v);
    world.add_vehicle(id, AgentKind::Car, 1.8, 4.5, state, route.clone(), Some(0.0), Some(car(v0))).unwrap();
    Arc::new(route)
}

/// Crossing point along the minor (S->N) and major (W->E) routes.
fn crossing() -> (f64, f64) {
    synth::crossing_arc_lengths(&synth::route_polyline(Compass::S, Compass::N), &synth::route_polyline(Compass::W, Compass::E)).unwrap()
}

/// Minor S->N car at 6 m/s starting 8 m (front) before its yield line, and
/// a major W->E car at 10 m/s that reaches the crossing `lead` seconds before
/// the minor car would at constant speed.
fn scene(lead: f64) -> (SimLog, Arc<Route>) {
    let space = Arc::new(synth::four_way_space());
    let mut w = World::new(space, BehaviorParams::default());
    let (s_minor, s_major) = crossing();
    let line = yield_line(&Route::between(&w.space, AgentKind::Car, Compass::S, Compass::N).unwrap());
    let s0 = line - 8.0 - 2.25;
    let minor = place(&mut w, MINOR, Compass::S, Compass::N, s0, 6.0, 6.0);
    let t_minor = (s_minor - s0) / 6.0;
    place(&mut w, MAJOR, Compass::W, Compass::E, s_major - 10.0 * (t_minor - lead), 10.0, 10.0);
    let cfg = SimConfig { duration: 16.0, ..Default::default() };
    (run_scenario(w, &cfg).unwrap().0, minor)
}

fn yield_line(route: &Route) -> f64 {
    route.conflicts.iter().find_map(|c| c.yield_line.filter(|_| c.other_has_priority)).unwrap()
}

#[test]
fn simultaneous_arrival_stops_at_the_yield_line() {
    let (log, route) = scene(0.0);
    let rows = log.agent_rows(MINOR);
    let slowest = rows.iter().min_by(|a, b| a.v.total_cmp(&b.v)).unwrap();
    let front = route.path.project(slowest.position()).s + 2.25;
    let line = yield_line(&route);
    assert!(slowest.v < 0.1, "minimum speed {}", slowest.v);
    assert!((front - line).abs() <= 0.5, "front {front} vs yield line {line}");
    assert!(log.collisions.is_empty(), "{:?}", log.collisions);
    // proceeds afterwards
    assert!(rows.last().unwrap().v > 2.0);
}

#[test]
fn clear_gap_does_not_stop() {
    let (log, route) = scene(3.0);
    let line = yield_line(&route);
    let min_v = log
        .agent_rows(MINOR)
        .iter()
        .filter(|r| route.path.project(r.position()).s + 2.25 <= line + 5.0)
        .map(|r| r.v)
        .fold(f64::INFINITY, f64::min);
    assert!(min_v > 2.0, "min approach speed {min_v}");
    assert!(log.collisions.is_empty());
}

/// Two cars on random crossing or merging routes with random speeds and a
/// random arrival offset around the crossing.
fn random_scene(seed: u64, terms: ForceTerms) -> SimLog {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let arms = [Compass::N, Compass::E, Compass::S, Compass::W];
    let space = Arc::new(synth::four_way_space());
    let mut w = World::new(space.clone(), BehaviorParams::default());
    loop {
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
            let a = arms[rng.gen_range(0..4)];
            let mut b = arms[rng.gen_range(0..4)];
            while b == a {
                b = arms[rng.gen_range(0..4)];
            }
            (a, b)
        };
        let (a0, a1) = pick(&mut rng);
        let (b0, b1) = pick(&mut rng);
        if a0 == b0 {
            continue;
        }
        let ra = Route::between(&space, AgentKind::Car, a0, a1).unwrap();
        let rb = Route::between(&space, AgentKind::Car, b0, b1).unwrap();
        let meet = synth::crossing_arc_lengths(&ra.path, &rb.path).or_else(|| {
            // merge: both end on the same outbound lane
            (a1 == b1).then(|| (ra.length() - 43.0, rb.length() - 43.0))
        });
        let Some((sa, sb)) = meet else { continue };
        let va: f64 = rng.gen_range(5.0..12.0);
        let vb: f64 = rng.gen_range(5.0..12.0);
        let t: f64 = rng.gen_range(2.5..5.0);
        let offset: f64 = rng.gen_range(-2.0..2.0);
        let s0a = (sa - va * t).max(0.0);
        let s0b = (sb - vb * (t + offset)).max(0.0);
        place(&mut w, 1, a0, a1, s0a, va, va);
        place(&mut w, 2, b0, b1, s0b, vb, vb);
        break;
    }
    let cfg = SimConfig { duration: 20.0, terms, ..Default::default() };
    run_scenario(w, &cfg).unwrap().0
}

#[test]
fn seeded_conflict_scenes_are_collision_free() {
    let mut bad = Vec::new();
    for seed in 0..100 {
        let log = random_scene(seed, ForceTerms::default());
        if !log.collisions.is_empty() {
            bad.push((seed, log.collisions.clone()));
        }
    }
    assert!(bad.is_empty(), "{} colliding scenes: {bad:?}", bad.len());
}

#[test]
fn conflict_scenes_collide_without_the_yield_term() {
    let terms = ForceTerms { priority: false, ..ForceTerms::default() };
    let colliding = (0..100).filter(|&seed| !random_scene(seed, terms).collisions.is_empty()).count();
    // a quarter of the scenes are genuine conflicts that only yielding resolves
    assert!(colliding >= 20, "only {colliding} of 100 scenes collide without the yield term");
}
