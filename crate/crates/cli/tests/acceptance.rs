//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! Criteria 1-9 exercise the library against independent oracles; criterion
//! 10 drives the `crossroads` binary end to end.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::sync::Arc;
use std::time::Instant;

use crossroads::calibrate::{run_ga, GaConfig, ParamSpec};
use crossroads::extraction::stats::five_number;
use crossroads::extraction::{buffer_half_width, compute_pet, conflict_path, extract_all, find_conflict_areas, ConflictArea, ExtractionConfig, ScenarioCategory};
use crossroads::geom::Polyline;
use crossroads::maneuvers::{assign_branch_label, label_recording, BranchLabel, LabelingConfig};
use crossroads::preprocess::{filter_tracks, FilterRules};
use crossroads::replay::{pure_replay, rewind_and_vary, run_adaptive, DissimilarityConfig, EgoPolicy, LateralRampPolicy, ReplayConfig, ReplayInputs, SelfReplayPolicy, SessionMode};
use crossroads::scenariodb::ScenarioRecord;
use crossroads::simcore::single_track::lateral_accel;
use crossroads::simcore::{
    curve_speed, generate_spawns, integrate, pedestrian_force, run_scenario, BehaviorParams, DiscNeighbor, FlowSpec, Integrator, KinematicState, Mode,
    PedestrianParams, ReplayClock, Route, SimConfig, SimLog, SpawnSpec, VehicleParams, World,
};
use crossroads::synth;
use crossroads::trajdata::{footprint_of, load_recording_dir, load_traffic_space, write_recording, AgentKind, Compass, Recording, Track, TrackSample, TrafficSpace};
use crossroads::Vec2d;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn space() -> Arc<TrafficSpace> {
    Arc::new(synth::four_way_space())
}

// ---------------------------------------------------------------------------
// 1. PET against a dense occupancy oracle

const RATE: f64 = 25.0;
const PED_R: f64 = 0.3;

struct Straight {
    dir: Vec2d,
    through: Vec2d,
    speed: f64,
    t_cross: f64,
}

impl Straight {
    fn at(&self, t: f64) -> Vec2d {
        self.through + self.dir * (self.speed * (t - self.t_cross))
    }

    fn track(&self, id: i64, kind: AgentKind, frames: i64) -> Track {
        let samples = (0..frames)
            .map(|f| TrackSample {
                frame: f,
                position: self.at(f as f64 / RATE),
                heading: self.dir.angle(),
                velocity: self.dir * self.speed,
                acceleration: Vec2d::zero(),
            })
            .collect();
        let (w, l) = synth::dimensions(kind);
        Track::new(id, kind, w, l, samples)
    }
}

/// First and last instant (1 ms grid) the continuous motion overlaps the area.
fn dense_interval(m: &Straight, track: &Track, area: &ConflictArea, duration: f64) -> Option<(f64, f64)> {
    let mut first = None;
    let mut last = None;
    for i in 0..=(duration / 1e-3).round() as i64 {
        let t = i as f64 * 1e-3;
        let fp = footprint_of(track.kind, track.length, track.width, m.at(t), m.dir.angle(), PED_R);
        if area.pieces.iter().any(|p| fp.overlaps_polygon(p)) {
            first.get_or_insert(t);
            last = Some(t);
        }
    }
    Some((first?, last?))
}

fn pet_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let kinds = [AgentKind::Car, AgentKind::Bicycle, AgentKind::Pedestrian, AgentKind::Truck];
    let frames = 300;
    let duration = (frames - 1) as f64 / RATE;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 200 {
        let ka = kinds[rng.gen_range(0..kinds.len())];
        let kb = kinds[rng.gen_range(0..kinds.len())];
        let speed = |rng: &mut ChaCha8Rng, k: AgentKind| match k {
            AgentKind::Pedestrian => rng.gen_range(0.8..2.0),
            AgentKind::Bicycle => rng.gen_range(3.0..7.0),
            _ => rng.gen_range(4.0..15.0),
        };
        let ha: f64 = rng.gen_range(-3.14..3.14);
        let hb = ha + rng.gen_range(0.5..2.6) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let meet = Vec2d::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let a = Straight {
            dir: Vec2d::from_angle(ha),
            through: meet,
            speed: speed(&mut rng, ka),
            t_cross: rng.gen_range(4.0..7.0),
        };
        let b = Straight {
            dir: Vec2d::from_angle(hb),
            through: meet,
            speed: speed(&mut rng, kb),
            t_cross: a.t_cross + rng.gen_range(-3.0..3.0),
        };
        let ta = a.track(1, ka, frames);
        let tb = b.track(2, kb, frames);
        let areas = find_conflict_areas(&conflict_path(&ta, 0.5), buffer_half_width(&ta, PED_R), &conflict_path(&tb, 0.5), buffer_half_width(&tb, PED_R))
            .map_err(|e| e.to_string())?;
        if areas.len() != 1 {
            continue;
        }
        let (Some(ia), Some(ib)) = (dense_interval(&a, &ta, &areas[0], duration), dense_interval(&b, &tb, &areas[0], duration)) else {
            continue;
        };
        let ((_, exit_first), (entry_second, _)) = if ia <= ib { (ia, ib) } else { (ib, ia) };
        let oracle = (entry_second - exit_first).max(0.0);
        let got = compute_pet(&ta, &tb, &areas, RATE, PED_R).pet.ok_or_else(|| format!("pair {checked}: no PET"))?;
        let err = (got - oracle).abs();
        ensure!(err <= 1.0 / RATE, "pair {checked}: PET {got} vs oracle {oracle}");
        worst = worst.max(err);
        checked += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("200 pairs, worst deviation {worst:.4} s, {secs:.1} s"))
}

// ---------------------------------------------------------------------------
// 2. Planted extraction

/// Conflict-area existence by brute force: do the two swept footprints ever
/// overlap, irrespective of time?
fn swept_footprints_overlap(a: &Track, b: &Track) -> bool {
    let reach = 0.5 * (a.length.hypot(a.width) + b.length.hypot(b.width)) + 2.0 * PED_R;
    a.samples.iter().any(|sa| {
        let fa = a.footprint(sa, PED_R);
        b.samples
            .iter()
            .filter(|sb| sa.position.dist(sb.position) <= reach)
            .any(|sb| fa.overlaps(&b.footprint(sb, PED_R)))
    })
}

fn planted_extraction() -> Outcome {
    let (raw, truth) = synth::planted_recording();
    let sp = space();
    let (rec, report) = filter_tracks(&raw, &FilterRules::defaults(raw.frame_rate));
    ensure!(report.removed.is_empty(), "filter removed {:?}", report.removed);
    let labels = label_recording(&rec, &sp, &LabelingConfig::default()).map_err(|e| e.to_string())?;
    let out = extract_all(&rec, &labels, &ExtractionConfig::default());
    let planted: Vec<_> = truth.iter().filter(|p| !p.decoy).collect();
    let count = |c: ScenarioCategory| planted.iter().filter(|p| p.category == c).count();
    ensure!(
        planted.len() == 20 && truth.len() == 30 && count(ScenarioCategory::V2v) == 8 && count(ScenarioCategory::V2p) == 6 && count(ScenarioCategory::V2b) == 6,
        "fixture does not hold 8/6/6 planted pairs and 10 decoys"
    );
    let found: Vec<(i64, i64, ScenarioCategory)> = out.scenarios.iter().map(|s| (s.core.ego_track_id, s.core.challenger_track_id, s.core.category)).collect();
    let expected: Vec<(i64, i64, ScenarioCategory)> = planted.iter().map(|p| (p.ego_track_id, p.challenger_track_id, p.category)).collect();
    let missed: Vec<_> = expected.iter().filter(|e| !found.contains(e)).collect();
    let extra: Vec<_> = found.iter().filter(|f| !expected.contains(f)).collect();
    ensure!(missed.is_empty() && extra.is_empty(), "missed {missed:?}, false retentions {extra:?}");
    let mut v2p = 0;
    for c in out.candidates.iter().filter(|c| c.category == ScenarioCategory::V2p) {
        let (a, b) = (rec.track(c.ego_track_id).unwrap(), rec.track(c.challenger_track_id).unwrap());
        let oracle = swept_footprints_overlap(a, b);
        ensure!(c.has_conflict_area == oracle, "v2p {}:{} conflict area {} vs oracle {oracle}", c.ego_track_id, c.challenger_track_id, c.has_conflict_area);
        v2p += 1;
    }
    Ok(format!("20/20 recovered with correct categories, 0 false retentions, {v2p} v2p verdicts match the oracle"))
}

// ---------------------------------------------------------------------------
// 3. Maneuver labeling

/// Nearest reference point by exhaustive scan; ties go to the smaller label.
fn oracle_label(track: &Track, space: &TrafficSpace, cfg: &LabelingConfig) -> Option<BranchLabel> {
    let w = cfg.endpoint_window.min(track.samples.len()).max(1);
    let mean = |s: &[TrackSample]| {
        let (sx, sy) = s.iter().fold((0.0, 0.0), |(x, y), p| (x + p.position.x, y + p.position.y));
        Vec2d::new(sx / s.len() as f64, sy / s.len() as f64)
    };
    let nearest = |p: Vec2d| {
        let mut cands: Vec<(f64, &str, Compass)> = space
            .reference_points
            .iter()
            .filter(|r| r.kinds.contains(&track.kind))
            .map(|r| (((r.position.x - p.x).powi(2) + (r.position.y - p.y).powi(2)).sqrt(), r.label.as_str(), r.label))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        cands.first().map(|c| (c.2, c.0))
    };
    let (entry, de) = nearest(mean(&track.samples[..w]))?;
    let (exit, dx) = nearest(mean(&track.samples[track.samples.len() - w..]))?;
    (de <= cfg.max_assign_distance && dx <= cfg.max_assign_distance).then(|| BranchLabel::new(entry, exit))
}

/// Random walk on a 1/1024 m grid so whole-meter translations are exact.
fn random_track(rng: &mut ChaCha8Rng, id: i64) -> Track {
    let kinds = [AgentKind::Car, AgentKind::Truck, AgentKind::Bus, AgentKind::Bicycle, AgentKind::Pedestrian];
    let kind = kinds[rng.gen_range(0..kinds.len())];
    let snap = |v: f64| (v * 1024.0).round() / 1024.0;
    let mut p = Vec2d::new(rng.gen_range(-70.0..70.0), rng.gen_range(-70.0..70.0));
    let n = rng.gen_range(1..80);
    let samples = (0..n)
        .map(|f| {
            p = p + Vec2d::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            TrackSample {
                frame: f,
                position: Vec2d::new(snap(p.x), snap(p.y)),
                heading: 0.0,
                velocity: Vec2d::zero(),
                acceleration: Vec2d::zero(),
            }
        })
        .collect();
    Track::new(id, kind, 1.0, 1.0, samples)
}

fn translated_space(space: &TrafficSpace, d: Vec2d) -> TrafficSpace {
    let mut spec = space.to_spec();
    let sh = |p: &mut [f64; 2]| {
        p[0] += d.x;
        p[1] += d.y;
    };
    for l in &mut spec.lanes {
        l.centerline.iter_mut().for_each(sh);
    }
    for c in &mut spec.crosswalks {
        c.iter_mut().for_each(sh);
    }
    for r in &mut spec.reference_points {
        sh(&mut r.xy);
    }
    TrafficSpace::from_spec(&spec).expect("translated map is valid")
}

/// Optional check on a real recording, enabled by `CROSSROADS_IND_RECORDING`
/// (recording directory) and `CROSSROADS_IND_MAP` (map JSON).
fn dataset_check() -> Option<Outcome> {
    let dir = std::env::var_os("CROSSROADS_IND_RECORDING")?;
    let map = std::env::var_os("CROSSROADS_IND_MAP")?;
    let run = || -> Outcome {
        let rec = load_recording_dir(Path::new(&dir)).map_err(|e| e.to_string())?;
        let sp = load_traffic_space(Path::new(&map)).map_err(|e| e.to_string())?;
        let labels = label_recording(&rec, &sp, &LabelingConfig::default()).map_err(|e| e.to_string())?;
        let vehicles: Vec<i64> = rec.tracks.iter().filter(|t| t.kind.is_motor_vehicle()).map(|t| t.track_id).collect();
        let odd: Vec<String> = labels
            .irregular()
            .filter(|l| vehicles.contains(&l.track_id))
            .map(|l| l.label.map_or("-".into(), |b| b.to_string()))
            .collect();
        let mut sorted = odd.clone();
        sorted.sort();
        ensure!(vehicles.len() == 270 && sorted == ["EE", "SS"], "{} vehicles, unassignable {odd:?}", vehicles.len());
        Ok("dataset: 270 vehicles, EE and SS unassignable".into())
    };
    Some(run())
}

fn labeling() -> Outcome {
    let sp = synth::four_way_space();
    let cfg = LabelingConfig {
        max_assign_distance: 25.0,
        ..LabelingConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut labeled = 0;
    for id in 0..1000 {
        let t = random_track(&mut rng, id);
        let got = assign_branch_label(&t, &sp, &cfg).map_err(|e| e.to_string())?;
        ensure!(got == oracle_label(&t, &sp, &cfg), "track {id}: {got:?} vs oracle");
        labeled += got.is_some() as usize;
    }
    ensure!(labeled > 100 && labeled < 1000, "degenerate sample: {labeled} of 1000 labeled");
    let mut shifted = 0;
    for d in [Vec2d::new(1000.0, -250.0), Vec2d::new(-37.0, 12.0), Vec2d::new(4096.0, 8192.0)] {
        let moved_space = translated_space(&sp, d);
        for id in 0..300 {
            let t = random_track(&mut rng, id);
            let mut moved = t.clone();
            for s in &mut moved.samples {
                s.position = s.position + d;
            }
            let a = assign_branch_label(&t, &sp, &cfg).map_err(|e| e.to_string())?;
            let b = assign_branch_label(&moved, &moved_space, &cfg).map_err(|e| e.to_string())?;
            ensure!(a == b, "track {id} shifted by {d:?}: {a:?} vs {b:?}");
            shifted += 1;
        }
    }
    let optional = match dataset_check() {
        None => "optional dataset check skipped (no recording configured)".to_string(),
        Some(Ok(s)) => s,
        Some(Err(e)) => return Err(format!("dataset check: {e}")),
    };
    Ok(format!("1000/1000 agree with the oracle ({labeled} labeled), {shifted} translated tracks invariant; {optional}"))
}

// ---------------------------------------------------------------------------
// 4. Force-model analytics

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
    Polyline::new(pts).expect("valid bend")
}

fn force_analytics() -> Outcome {
    let p = PedestrianParams::<f64>::default();
    let mut eq: f64 = 0.0;
    for angle in [0.0, 0.7, 2.0, -1.3] {
        let dir = Vec2d::from_angle(angle);
        let x = Vec2d::new(3.0, -2.0);
        eq = eq.max(pedestrian_force(x, dir * p.desired_speed, angle, &p, x + dir * 20.0, &[], &[]).total().norm());
    }
    ensure!(eq < 1e-9, "equilibrium force {eq}");

    let rest = pedestrian_force(Vec2d::zero(), Vec2d::zero(), 0.0, &p, Vec2d::new(0.0, 10.0), &[], &[]);
    let rest_err = (rest.driving.norm() - p.desired_speed / p.relaxation_time).abs();
    ensure!(rest_err < 1e-12, "rest driving force off by {rest_err}");

    let (a, b, v) = (Vec2d::new(-1.0, 0.0), Vec2d::new(1.0, 0.0), Vec2d::new(1.2, 0.0));
    let fa = pedestrian_force(a, v, 0.0, &p, Vec2d::new(10.0, 0.0), &[DiscNeighbor { position: b, radius: p.radius }], &[]);
    let fb = pedestrian_force(b, -v, std::f64::consts::PI, &p, Vec2d::new(-10.0, 0.0), &[DiscNeighbor { position: a, radius: p.radius }], &[]);
    let mirror = (fa.total() + fb.total()).norm();
    ensure!(mirror < 1e-9, "head-on forces do not mirror: {mirror}");

    let car = VehicleParams::<f64>::car();
    let sp = space();
    let mut worst_lat: f64 = 0.0;
    for (entry, exit) in [(Compass::S, Compass::W), (Compass::S, Compass::E), (Compass::W, Compass::N), (Compass::N, Compass::W)] {
        let route = Route::between(&sp, AgentKind::Car, entry, exit).map_err(|e| e.to_string())?;
        let mut w = World::new(sp.clone(), BehaviorParams::default());
        let state = KinematicState::new(route.path.point_at(0.0), route.path.heading_at(0.0), 12.0);
        w.add_vehicle(1, AgentKind::Car, 1.8, 4.5, state, route.clone(), Some(0.0), None).map_err(|e| e.to_string())?;
        let (log, _) = run_scenario(w, &SimConfig { duration: 20.0, ..Default::default() }).map_err(|e| e.to_string())?;
        for row in log.agent_rows(1) {
            worst_lat = worst_lat.max(lateral_accel(row.v, row.delta, car.wheelbase).abs() / car.max_lateral_accel);
        }
    }
    ensure!(worst_lat <= 1.05, "lateral acceleration reached {:.3} x the limit in a 90 degree turn", worst_lat);

    let r = 20.0;
    let params = VehicleParams { max_lateral_accel: 2.5, ..VehicleParams::car() };
    let target = (2.5f64 * r).sqrt();
    ensure!((curve_speed(2.5, 1.0 / r) - target).abs() < 1e-12, "curve speed formula");
    let mut w = World::new(sp, BehaviorParams::default());
    w.add_vehicle(1, AgentKind::Car, 1.8, 4.5, KinematicState::new(Vec2d::new(-60.0, 0.0), 0.0, 12.0), Route::free(bend(r)), Some(0.0), Some(params))
        .map_err(|e| e.to_string())?;
    let (log, _) = run_scenario(w, &SimConfig { duration: 25.0, ..Default::default() }).map_err(|e| e.to_string())?;
    let rows = log.agent_rows(1);
    let entry = rows.iter().find(|row| row.x >= 0.0).ok_or("never reached the bend")?;
    let entry_err = (entry.v - target).abs() / target;
    ensure!(entry_err < 0.05, "curve entry speed {} vs {target}", entry.v);
    Ok(format!(
        "equilibrium {eq:.1e}, rest error {rest_err:.1e}, mirror {mirror:.1e}, lateral accel <= {:.3} x limit, curve entry within {:.2}%",
        worst_lat,
        100.0 * entry_err
    ))
}

// ---------------------------------------------------------------------------
// 5. Single-track geometry

/// Mean radius and worst deviation from the analytic circle.
fn circle(integrator: Integrator, dt: f64) -> (f64, f64, f64) {
    let (l, delta, v) = (2.8, 0.1f64, 10.0);
    let r = l / delta.tan();
    let center = Vec2d::new(0.0, r);
    let mut s = KinematicState::new(Vec2d::zero(), 0.0, v);
    let (mut sum, mut worst) = (0.0, 0.0f64);
    let n = (20.0 / dt).round() as usize;
    for _ in 0..n {
        s = integrate(&s, 0.0, delta, l, dt, integrator);
        let d = s.position.dist(center);
        sum += d;
        worst = worst.max((d - r).abs());
    }
    (r, sum / n as f64, worst)
}

fn single_track() -> Outcome {
    let mut notes = Vec::new();
    for integrator in [Integrator::Euler, Integrator::Heun] {
        let (r, mean, _) = circle(integrator, 0.01);
        let rel = (mean - r).abs() / r;
        ensure!(rel < 0.005, "{integrator}: mean radius {mean} vs L/tan(delta) = {r}");
        notes.push(format!("{integrator} {:.4}%", 100.0 * rel));
    }
    let (_, _, e) = circle(Integrator::Euler, 0.01);
    let (_, _, h) = circle(Integrator::Heun, 0.01);
    ensure!(h < e, "heun error {h} not below euler error {e}");
    Ok(format!("radius error {}; max deviation euler {e:.2e} m, heun {h:.2e} m", notes.join(", ")))
}

// ---------------------------------------------------------------------------
// 6. Priority emergence

const MINOR: i64 = 1;

fn place(world: &mut World, id: i64, entry: Compass, exit: Compass, s: f64, v: f64) -> Result<Route, String> {
    let route = Route::between(&world.space, AgentKind::Car, entry, exit).map_err(|e| e.to_string())?;
    let state = KinematicState::new(route.path.point_at(s), route.path.heading_at(s), v);
    let params = VehicleParams { desired_speed: v, ..VehicleParams::car() };
    world.add_vehicle(id, AgentKind::Car, 1.8, 4.5, state, route.clone(), Some(0.0), Some(params)).map_err(|e| e.to_string())?;
    Ok(route)
}

fn yield_line(route: &Route) -> f64 {
    route.conflicts.iter().find_map(|c| c.yield_line.filter(|_| c.other_has_priority)).expect("minor route yields")
}

/// Minor S->N car at 6 m/s, 8 m before its yield line; the major W->E car
/// at 10 m/s reaches the crossing `lead` seconds before the minor car would.
fn priority_scene(lead: f64) -> Result<(SimLog, Route), String> {
    let mut w = World::new(space(), BehaviorParams::default());
    let (s_minor, s_major) = synth::crossing_arc_lengths(&synth::route_polyline(Compass::S, Compass::N), &synth::route_polyline(Compass::W, Compass::E)).ok_or("routes do not cross")?;
    let line = yield_line(&Route::between(&w.space, AgentKind::Car, Compass::S, Compass::N).map_err(|e| e.to_string())?);
    let s0 = line - 8.0 - 2.25;
    let minor = place(&mut w, MINOR, Compass::S, Compass::N, s0, 6.0)?;
    let t_minor = (s_minor - s0) / 6.0;
    place(&mut w, 2, Compass::W, Compass::E, s_major - 10.0 * (t_minor - lead), 10.0)?;
    let log = run_scenario(w, &SimConfig { duration: 16.0, ..Default::default() }).map_err(|e| e.to_string())?.0;
    Ok((log, minor))
}

fn random_conflict_scene(seed: u64) -> Result<SimLog, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arms = [Compass::N, Compass::E, Compass::S, Compass::W];
    let sp = space();
    let mut w = World::new(sp.clone(), BehaviorParams::default());
    loop {
        let mut pick = || {
            let a = arms[rng.gen_range(0..4)];
            let mut b = arms[rng.gen_range(0..4)];
            while b == a {
                b = arms[rng.gen_range(0..4)];
            }
            (a, b)
        };
        let (a0, a1) = pick();
        let (b0, b1) = pick();
        if a0 == b0 {
            continue;
        }
        let ra = Route::between(&sp, AgentKind::Car, a0, a1).map_err(|e| e.to_string())?;
        let rb = Route::between(&sp, AgentKind::Car, b0, b1).map_err(|e| e.to_string())?;
        let meet = synth::crossing_arc_lengths(&ra.path, &rb.path).or_else(|| (a1 == b1).then(|| (ra.length() - 43.0, rb.length() - 43.0)));
        let Some((sa, sb)) = meet else { continue };
        let va: f64 = rng.gen_range(5.0..12.0);
        let vb: f64 = rng.gen_range(5.0..12.0);
        let t: f64 = rng.gen_range(2.5..5.0);
        let offset: f64 = rng.gen_range(-2.0..2.0);
        place(&mut w, 1, a0, a1, (sa - va * t).max(0.0), va)?;
        place(&mut w, 2, b0, b1, (sb - vb * (t + offset)).max(0.0), vb)?;
        break;
    }
    Ok(run_scenario(w, &SimConfig { duration: 20.0, ..Default::default() }).map_err(|e| e.to_string())?.0)
}

fn priority() -> Outcome {
    let (log, route) = priority_scene(0.0)?;
    let line = yield_line(&route);
    let rows = log.agent_rows(MINOR);
    let slowest = rows.iter().min_by(|a, b| a.v.total_cmp(&b.v)).ok_or("minor car missing")?;
    let front = route.path.project(slowest.position()).s + 2.25;
    ensure!(slowest.v < 0.1 && (front - line).abs() <= 0.5, "simultaneous arrival: min speed {} at {:.2} m from the yield line", slowest.v, front - line);

    let (log, route) = priority_scene(3.0)?;
    let line = yield_line(&route);
    let min_v = log
        .agent_rows(MINOR)
        .iter()
        .filter(|r| route.path.project(r.position()).s + 2.25 <= line + 5.0)
        .map(|r| r.v)
        .fold(f64::INFINITY, f64::min);
    ensure!(min_v > 2.0, "clear gap: min approach speed {min_v}");

    let mut colliding = Vec::new();
    for seed in 0..100 {
        if !random_conflict_scene(seed)?.collisions.is_empty() {
            colliding.push(seed);
        }
    }
    ensure!(colliding.is_empty(), "collisions in seeded scenes {colliding:?}");
    Ok(format!(
        "stops at {:.3} m/s, {:+.2} m from the yield line; clear-gap min speed {min_v:.2} m/s; 100 seeded scenes collision-free",
        slowest.v,
        front - line
    ))
}

// ---------------------------------------------------------------------------
// 7. Trajectory variance

fn trajectory_variance() -> Outcome {
    let sp = space();
    let mut w = World::new(sp.clone(), BehaviorParams::default());
    let spec = SpawnSpec {
        flows: vec![FlowSpec {
            kind: AgentKind::Car,
            entry: Compass::W,
            exit: Compass::E,
            rate_per_hour: 1200.0,
            start: 0.0,
            end: 250.0,
        }],
        ..Default::default()
    };
    w.pending = generate_spawns(&sp, &w.params, &spec, 21).map_err(|e| e.to_string())?;
    let log = run_scenario(w, &SimConfig { duration: 260.0, log_every: 2, ..Default::default() }).map_err(|e| e.to_string())?.0;
    let route = Route::between(&sp, AgentKind::Car, Compass::W, Compass::E).map_err(|e| e.to_string())?;
    let mid = 0.5 * route.length();
    let cap = 0.5 * (synth::LANE_WIDTH - 1.8);
    let mut worst_lateral: f64 = 0.0;
    let mut at_mid: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for r in log.rows() {
        let pr = route.path.project(r.position());
        worst_lateral = worst_lateral.max(pr.lateral.abs());
        let e = at_mid.entry(r.agent_id).or_insert((f64::INFINITY, 0.0));
        if (pr.s - mid).abs() < e.0 {
            *e = ((pr.s - mid).abs(), pr.lateral);
        }
    }
    ensure!(worst_lateral <= cap + 0.05, "lane departure: {worst_lateral:.3} m off the centerline");
    let offsets: Vec<f64> = at_mid.values().filter(|(d, _)| *d < 0.5).map(|(_, q)| *q).take(50).collect();
    ensure!(offsets.len() == 50, "only {} vehicles passed the mid-route section", offsets.len());
    let mean = offsets.iter().sum::<f64>() / 50.0;
    let sd = (offsets.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
    ensure!(sd > 0.05, "lateral sd {sd:.4} m");
    Ok(format!("lateral sd {sd:.3} m over 50 vehicles, max offset {worst_lateral:.3} m (cap {cap:.2} m)"))
}

// ---------------------------------------------------------------------------
// 8. GA

fn genetic_algorithm() -> Outcome {
    let started = Instant::now();
    let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let spec = ParamSpec::new((0..5).map(|i| (format!("x{i}"), -5.0, 5.0))).map_err(|e| e.to_string())?;
    let cfg = GaConfig {
        population: 50,
        generations: 200,
        seed: 2,
        ..GaConfig::default()
    };
    let a = run_ga(&spec, &cfg, sphere).map_err(|e| e.to_string())?;
    ensure!(a.best_fitness <= 1e-2, "best fitness {}", a.best_fitness);
    ensure!(a.history.windows(2).all(|w| w[1].best <= w[0].best), "best-so-far increased");
    let b = run_ga(&spec, &cfg, sphere).map_err(|e| e.to_string())?;
    ensure!(a == b, "same seed gave a different result");
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1} s");
    Ok(format!("best {:.2e} after 200 generations, monotone, reproducible, {secs:.1} s", a.best_fitness))
}

// ---------------------------------------------------------------------------
// 9. Replay-to-sim

const EGO: i64 = 1;

/// Major W->E car (the ego) and a minor S->N car that gives way to it.
fn crossing_recording() -> Result<Recording, String> {
    let sp = space();
    let mut w = World::new(sp.clone(), BehaviorParams::default()).with_clock(ReplayClock {
        frame0: 0,
        frame_rate: RATE,
        substeps: 2,
    });
    let major = Route::between(&sp, AgentKind::Car, Compass::W, Compass::E).map_err(|e| e.to_string())?;
    let minor = Route::between(&sp, AgentKind::Car, Compass::S, Compass::N).map_err(|e| e.to_string())?;
    let (s_minor, s_major) = synth::crossing_arc_lengths(&minor.path, &major.path).ok_or("routes do not cross")?;
    let s0 = s_major - 50.0;
    let state = KinematicState::new(major.path.point_at(s0), major.path.heading_at(s0), 10.0);
    w.add_vehicle(EGO, AgentKind::Car, 1.8, 4.5, state, major, Some(0.0), Some(VehicleParams { desired_speed: 10.0, ..VehicleParams::car() }))
        .map_err(|e| e.to_string())?;
    let s1 = s_minor - 44.0;
    let state = KinematicState::new(minor.path.point_at(s1), minor.path.heading_at(s1), 8.0);
    w.add_vehicle(2, AgentKind::Car, 1.8, 4.5, state, minor, Some(0.0), Some(VehicleParams { desired_speed: 8.0, ..VehicleParams::car() }))
        .map_err(|e| e.to_string())?;
    let (log, _) = run_scenario(w, &SimConfig { duration: 14.0, log_every: 2, ..SimConfig::default() }).map_err(|e| e.to_string())?;
    Ok(log.to_recording(1, "four_way", &|_, _| (1.8, 4.5)))
}

fn replay_inputs(threshold: f64) -> Result<ReplayInputs, String> {
    let rec = crossing_recording()?;
    let sp = space();
    let labels = label_recording(&rec, &sp, &LabelingConfig::default()).map_err(|e| e.to_string())?;
    let scn = extract_all(&rec, &labels, &ExtractionConfig::default())
        .scenarios
        .into_iter()
        .find(|s| s.core.ego_track_id == EGO && s.core.challenger_track_id == 2)
        .ok_or("crossing not extracted")?;
    let cfg = ReplayConfig {
        dissimilarity: DissimilarityConfig { threshold, ..Default::default() },
        ..ReplayConfig::default()
    };
    Ok(ReplayInputs::new(scn, labels, sp, BehaviorParams::default(), cfg))
}

fn replay() -> Outcome {
    let threshold = 1.5;
    let inputs = replay_inputs(threshold)?;
    let ego = Arc::new(inputs.scenario.participant(EGO).cloned().ok_or("ego missing")?);

    for th in [1e-9, threshold] {
        let inp = replay_inputs(th)?;
        let s = run_adaptive(&inp, &mut SelfReplayPolicy { track: ego.clone() }).map_err(|e| e.to_string())?;
        ensure!(s.trigger.is_none() && s.mode == SessionMode::Replay, "self-replay triggered at threshold {th}");
    }

    // lateral offset growing at 1 m/s: crosses 1.5 m after 1.5 s
    let start = inputs.scenario.core.frame_window.0 + 5;
    let ramp = {
        let ego = ego.clone();
        move || -> Box<dyn EgoPolicy> {
            Box::new(LateralRampPolicy {
                track: ego.clone(),
                frame_rate: RATE,
                start_frame: start,
                rate: 1.0,
                max_offset: 1.6,
            })
        }
    };
    let s = run_adaptive(&inputs, ramp().as_mut()).map_err(|e| e.to_string())?;
    let expected = start + (threshold / 1.0 * RATE).ceil() as i64;
    let trig = s.trigger.ok_or("ramp never triggered")?.frame;
    ensure!((trig - expected).abs() <= 1, "trigger at frame {trig}, expected {expected} +- 1");

    let switches = s.trace.windows(2).filter(|w| w[0].mode != w[1].mode).count();
    let back = s.trace.windows(2).any(|w| w[0].mode == SessionMode::Agent && w[1].mode == SessionMode::Replay);
    ensure!(switches <= 1 && !back, "session mode changed {switches} times");
    let mut agents = std::collections::BTreeSet::new();
    for r in s.log.rows() {
        match r.mode {
            Mode::Agent => {
                agents.insert(r.agent_id);
            }
            Mode::Replayed => ensure!(!agents.contains(&r.agent_id), "agent {} returned to replay", r.agent_id),
        }
    }

    let pure = pure_replay(&inputs).map_err(|e| e.to_string())?;
    let pure_rows: BTreeMap<(i64, i64), _> = pure.rows().map(|r| ((r.frame, r.agent_id), *r)).collect();
    let mut compared = 0;
    for r in s.log.rows().filter(|r| r.frame < trig && r.agent_id != EGO) {
        let p = pure_rows.get(&(r.frame, r.agent_id)).ok_or_else(|| format!("no pure-replay row for {}@{}", r.agent_id, r.frame))?;
        let bits = |r: &crossroads::simcore::LogRow| (r.x.to_bits(), r.y.to_bits(), r.heading.to_bits(), r.v.to_bits(), r.mode);
        ensure!(bits(r) == bits(p), "agent {} frame {} differs from pure replay", r.agent_id, r.frame);
        compared += 1;
    }
    ensure!(compared > 0, "no pre-trigger rows to compare");

    let runs = rewind_and_vary(&inputs, &s, &ramp, 0.0, &[]).map_err(|e| e.to_string())?;
    let post: Vec<_> = s.log.rows().filter(|r| r.frame >= trig).copied().collect();
    let again: Vec<_> = runs[0].log.rows().copied().collect();
    ensure!(post == again, "rewind without variation diverged from the post-trigger segment");
    Ok(format!(
        "self-replay never triggers; ramp triggers at {trig} (analytic {expected}); {compared} pre-trigger rows bit-identical; one mode switch; rewind reproduces {} rows",
        post.len()
    ))
}

// ---------------------------------------------------------------------------
// 10. Determinism and round trip

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("readable run directory") {
            let p = entry.expect("directory entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

struct Cli {
    work: PathBuf,
}

impl Cli {
    fn run(&self, args: &[&str]) -> Result<(), String> {
        let out = Process::new(env!("CARGO_BIN_EXE_crossroads"))
            .current_dir(&self.work)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.success(), "`crossroads {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
        Ok(())
    }

    /// Runs a subcommand twice into the same run directory and compares every file.
    fn twice(&self, run_id: &str, args: &[&str]) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
        let dir = self.work.join("out").join(run_id);
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--run-id", run_id]);
        self.run(&full)?;
        let first = files_under(&dir);
        std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
        self.run(&full)?;
        let second = files_under(&dir);
        ensure!(first.len() == second.len(), "{run_id}: {} vs {} files", first.len(), second.len());
        for (path, bytes) in &first {
            ensure!(second.get(path) == Some(bytes), "{run_id}: {} differs between runs", path.display());
        }
        // every content artifact carries the stamp
        for (path, bytes) in &first {
            let text = String::from_utf8_lossy(bytes);
            let stamped = match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => text.starts_with(&format!("# {} config=", crossroads::PIPELINE_VERSION)),
                Some("json") if path.starts_with("reports") || path.starts_with("scenarios") => text.contains("config_hash") && text.contains(crossroads::PIPELINE_VERSION),
                _ => true,
            };
            ensure!(stamped, "{run_id}: {} lacks version and config hash", path.display());
        }
        Ok(first)
    }
}

/// Quantile by rank weights over a sorted copy.
fn sort_quantile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let w = pos - lo as f64;
    v[lo] * (1.0 - w) + v[hi] * w
}

fn five_oracle(data: &[f64]) -> [f64; 5] {
    [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| sort_quantile(data, p))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cli = Cli { work: tmp.path().to_path_buf() };
    cli.run(&["synth", "--out", "data"])?;
    // a two-slot excerpt keeps calibration short
    let (planted, _) = synth::planted_recording();
    let excerpt = Recording {
        tracks: planted.tracks.iter().filter_map(|t| t.clipped(0, (2.0 * synth::PLANTED_SLOT_SECONDS * RATE) as i64 - 1)).collect(),
        ..planted.clone()
    };
    write_recording(&excerpt, &tmp.path().join("data/excerpt")).map_err(|e| e.to_string())?;

    let mut artifacts = 0;
    let extract = cli.twice("extract", &["extract", "-s", "extract.export_xml=true"])?;
    artifacts += extract.len();
    artifacts += cli.twice("simulate", &["simulate", "-s", "sim.duration=40", "-s", "seed=5"])?.len();
    artifacts += cli
        .twice(
            "calibrate",
            &["calibrate", "-s", "paths.data=data/excerpt", "-s", "ga.population=4", "-s", "ga.generations=2", "-s", "ga.elitism=1", "-s", "seed=3"],
        )?
        .len();
    artifacts += cli.twice("replay", &["replay", "-s", "replay.variations=3", "-s", "seed=4"])?.len();
    artifacts += cli.twice("stats", &["stats", "-s", "paths.scenarios=out/extract"])?.len();
    artifacts += cli.twice("sample", &["sample", "-s", "sample.functional_type=v2p:cross", "-s", "sample.count=25"])?.len();

    // scenario JSON round trip, against an in-process extraction too
    let (rec, _) = synth::planted_recording();
    let (rec, _) = filter_tracks(&rec, &FilterRules::defaults(rec.frame_rate));
    let labels = label_recording(&rec, &space(), &LabelingConfig::default()).map_err(|e| e.to_string())?;
    let fresh = extract_all(&rec, &labels, &ExtractionConfig::default()).scenarios;
    let mut by_type: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut round_trips = 0;
    for (path, bytes) in extract.iter().filter(|(p, _)| p.starts_with("scenarios") && p.extension().is_some_and(|e| e == "json")) {
        let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
        let record = ScenarioRecord::from_json(text).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure!(record.to_json().map_err(|e| e.to_string())? == text, "{} does not re-serialize byte-identically", path.display());
        let s = &record.scenario;
        let twin = fresh
            .iter()
            .find(|f| f.core.ego_track_id == s.core.ego_track_id && f.core.challenger_track_id == s.core.challenger_track_id)
            .ok_or("stored scenario not found in a fresh extraction")?;
        for (a, b) in s.participants.iter().zip(&twin.participants) {
            for (x, y) in a.samples.iter().zip(&b.samples) {
                let bits = |t: &TrackSample| {
                    [t.position.x, t.position.y, t.heading, t.velocity.x, t.velocity.y, t.acceleration.x, t.acceleration.y].map(f64::to_bits)
                };
                ensure!(bits(x) == bits(y) && x.frame == y.frame, "{}: track {} frame {} not bit-exact", path.display(), a.track_id, x.frame);
            }
        }
        ensure!(s.participants.len() == twin.participants.len() && s.core == twin.core, "{}: content differs", path.display());
        if let Some(p) = s.core.pet.pet {
            by_type.entry(s.core.functional_type.to_string()).or_default().push(p);
        }
        round_trips += 1;
    }
    ensure!(round_trips == 20, "{round_trips} scenario files");

    // PET summaries in the stats artifact against the sort oracle
    let stats = String::from_utf8(extract[Path::new("reports/pet_stats.csv")].clone()).map_err(|e| e.to_string())?;
    let mut rows = 0;
    for line in stats.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        let count: usize = f[1].parse().map_err(|_| format!("bad count in `{line}`"))?;
        let data = by_type.get(f[0]).cloned().unwrap_or_default();
        ensure!(count == data.len(), "{}: count {count} vs {}", f[0], data.len());
        if count == 0 {
            continue;
        }
        let oracle = five_oracle(&data);
        for (i, o) in oracle.iter().enumerate() {
            let got: f64 = f[2 + i].parse().map_err(|_| format!("bad number in `{line}`"))?;
            ensure!((got - o).abs() <= 1e-12, "{} column {i}: {got} vs oracle {o}", f[0]);
        }
        rows += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..500 {
        let n = rng.gen_range(1..100);
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let s = five_number(&data);
        let got = [s.min, s.q1, s.median, s.q3, s.max];
        for (g, o) in got.iter().zip(five_oracle(&data)) {
            ensure!((g - o).abs() <= 1e-12, "five-number {g} vs oracle {o} on {data:?}");
        }
    }
    Ok(format!(
        "6 subcommands re-run byte-identically ({artifacts} artifacts); 20 scenario files round-trip bit-exactly; {rows} stats rows and 500 random sets match the sort oracle"
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("PET oracle equivalence", pet_oracle),
        ("planted extraction recall/precision", planted_extraction),
        ("maneuver labeling", labeling),
        ("force-model analytics", force_analytics),
        ("single-track geometry", single_track),
        ("priority emergence", priority),
        ("trajectory variance", trajectory_variance),
        ("genetic algorithm", genetic_algorithm),
        ("replay-to-sim", replay),
        ("determinism and round trip", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
