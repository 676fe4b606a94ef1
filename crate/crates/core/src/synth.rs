//! Bundled synthetic fixtures: a four-way intersection and a recording with
//! planted ground-truth scenarios.
//!
//! The intersection sits at the origin with 50 m arms, one 3.5 m lane per
//! direction and right-hand traffic. The east-west road has priority; the
//! north-south approaches carry a yield line one meter before the box.

use std::collections::BTreeSet;

use crate::extraction::ScenarioCategory;
use crate::geom::{segment_intersection, Polyline};
use crate::trajdata::{
    central_differences, AgentKind, Compass, LaneSpec, Recording, ReferencePointSpec, Track, TrackSample, TrafficSpace,
    TrafficSpaceSpec,
};
use crate::Vec2d;

pub const ARM_LENGTH: f64 = 50.0;
pub const LANE_WIDTH: f64 = 3.5;
/// Distance from the center where approach lanes end and connectors begin.
pub const BOX_HALF: f64 = 7.0;
pub const SPEED_LIMIT: f64 = 13.89;
pub const SPACE_ID: &str = "fourway";
/// Crosswalks span this radial band on every arm.
pub const CROSSWALK_BAND: (f64, f64) = (9.0, 12.0);

const ARMS: [Compass; 4] = [Compass::N, Compass::E, Compass::S, Compass::W];

fn outward(b: Compass) -> Vec2d {
    // exact axis vectors keep the map coordinates free of rounding noise
    match b {
        Compass::N => Vec2d::new(0.0, 1.0),
        Compass::E => Vec2d::new(1.0, 0.0),
        Compass::S => Vec2d::new(0.0, -1.0),
        Compass::W => Vec2d::new(-1.0, 0.0),
        other => Vec2d::from_angle(other.bearing()),
    }
}

/// Right normal of a direction.
fn right_of(d: Vec2d) -> Vec2d {
    Vec2d::new(d.y, -d.x)
}

fn rank(b: Compass) -> i32 {
    match b {
        Compass::E | Compass::W => 0,
        _ => 1,
    }
}

fn inbound_points(b: Compass) -> (Vec2d, Vec2d) {
    let u = outward(b);
    let r = right_of(-u) * (0.5 * LANE_WIDTH);
    (u * ARM_LENGTH + r, u * BOX_HALF + r)
}

fn outbound_points(b: Compass) -> (Vec2d, Vec2d) {
    let u = outward(b);
    let r = right_of(u) * (0.5 * LANE_WIDTH);
    (u * BOX_HALF + r, u * ARM_LENGTH + r)
}

/// Connector centerline from the end of `in_from` to the start of `out_to`:
/// a straight line, or a quarter circle (right turns hug the corner).
pub fn connector_points(from: Compass, to: Compass) -> Vec<Vec2d> {
    let (_, p0) = inbound_points(from);
    let (p1, _) = outbound_points(to);
    let d0 = -outward(from);
    let d1 = outward(to);
    let turn = d0.cross(d1);
    if turn.abs() < 1e-9 {
        return vec![p0, p1];
    }
    let left = turn > 0.0;
    let radius = if left { BOX_HALF + 0.5 * LANE_WIDTH } else { BOX_HALF - 0.5 * LANE_WIDTH };
    let n0 = if left { d0.perp() } else { -d0.perp() };
    let center = p0 + n0 * radius;
    let a0 = (p0 - center).angle();
    let sweep = if left { std::f64::consts::FRAC_PI_2 } else { -std::f64::consts::FRAC_PI_2 };
    let steps = ((radius * sweep.abs()) / 0.5).ceil() as usize;
    let mut pts: Vec<Vec2d> = (0..=steps)
        .map(|i| center + Vec2d::from_angle(a0 + sweep * i as f64 / steps as f64) * radius)
        .collect();
    // pin the ends exactly
    pts[0] = p0;
    *pts.last_mut().unwrap() = p1;
    pts
}

fn lane_spec(id: String, pts: Vec<Vec2d>, rank: i32, successors: Vec<String>, yield_s: Option<f64>) -> LaneSpec {
    LaneSpec {
        id,
        centerline: pts.iter().map(|p| [p.x, p.y]).collect(),
        width: LANE_WIDTH,
        speed_limit: SPEED_LIMIT,
        priority_rank: rank,
        successors,
        yield_s,
    }
}

/// Serializable description of the bundled intersection.
pub fn four_way_spec() -> TrafficSpaceSpec {
    let mut lanes = Vec::new();
    for a in ARMS {
        let (s, e) = inbound_points(a);
        let succ = ARMS.iter().filter(|b| **b != a).map(|b| format!("c_{a}_{b}")).collect();
        lanes.push(lane_spec(format!("in_{a}"), vec![s, e], rank(a), succ, Some(ARM_LENGTH - BOX_HALF - 1.0)));
        let (s, e) = outbound_points(a);
        lanes.push(lane_spec(format!("out_{a}"), vec![s, e], rank(a), vec![], None));
    }
    for a in ARMS {
        for b in ARMS {
            if a != b {
                lanes.push(lane_spec(format!("c_{a}_{b}"), connector_points(a, b), rank(a), vec![format!("out_{b}")], None));
            }
        }
    }
    let half_road = LANE_WIDTH + 1.0;
    let crosswalks = ARMS
        .iter()
        .map(|&a| {
            let u = outward(a);
            let n = u.perp();
            let (r0, r1) = CROSSWALK_BAND;
            [u * r0 - n * half_road, u * r1 - n * half_road, u * r1 + n * half_road, u * r0 + n * half_road]
                .iter()
                .map(|p| [p.x, p.y])
                .collect()
        })
        .collect();
    let vehicles = vec![AgentKind::Car, AgentKind::Truck, AgentKind::Bus, AgentKind::Bicycle];
    let mut reference_points: Vec<ReferencePointSpec> = ARMS
        .iter()
        .map(|&a| {
            let p = outward(a) * 40.0;
            ReferencePointSpec {
                label: a.to_string(),
                xy: [p.x, p.y],
                kinds: vehicles.clone(),
            }
        })
        .collect();
    for (label, x, y) in [("NE", 9.0, 9.0), ("NW", -9.0, 9.0), ("SE", 9.0, -9.0), ("SW", -9.0, -9.0)] {
        reference_points.push(ReferencePointSpec {
            label: label.to_string(),
            xy: [x, y],
            kinds: vec![AgentKind::Pedestrian],
        });
    }
    TrafficSpaceSpec {
        id: SPACE_ID.to_string(),
        lanes,
        crosswalks,
        reference_points,
    }
}

pub fn four_way_space() -> TrafficSpace {
    TrafficSpace::from_spec(&four_way_spec()).expect("bundled map is valid")
}

/// Centerline of the full vehicle route `entry -> exit` (approach, connector, exit lane).
pub fn route_polyline(entry: Compass, exit: Compass) -> Polyline<f64> {
    let (a0, a1) = inbound_points(entry);
    let (b0, b1) = outbound_points(exit);
    let mut pts = vec![a0];
    if entry == exit {
        pts.push(a1);
        pts.push(b0);
    } else {
        pts.extend(connector_points(entry, exit));
    }
    pts.push(b1);
    Polyline::new(pts).expect("route is non-degenerate")
}

/// Pedestrian path along the crosswalk of `arm`, from the corner on the left
/// of an outward-facing observer to the one on the right.
pub fn crosswalk_path(arm: Compass) -> Polyline<f64> {
    let u = outward(arm);
    let n = u.perp();
    let mid = 0.5 * (CROSSWALK_BAND.0 + CROSSWALK_BAND.1);
    Polyline::new(vec![u * mid + n * 9.0, u * mid - n * 9.0]).unwrap()
}

/// Arc length along both paths at their first crossing.
pub fn crossing_arc_lengths(a: &Polyline<f64>, b: &Polyline<f64>) -> Option<(f64, f64)> {
    let (pa, pb) = (a.points(), b.points());
    let (ca, cb) = (a.arc_lengths(), b.arc_lengths());
    for i in 0..pa.len() - 1 {
        for j in 0..pb.len() - 1 {
            if let Some((_, t, u)) = segment_intersection(pa[i], pa[i + 1], pb[j], pb[j + 1]) {
                return Some((ca[i] + (ca[i + 1] - ca[i]) * t, cb[j] + (cb[j + 1] - cb[j]) * u));
            }
        }
    }
    None
}

/// Typical (width, length) for synthetic agents.
pub fn dimensions(kind: AgentKind) -> (f64, f64) {
    match kind {
        AgentKind::Car => (1.8, 4.5),
        AgentKind::Truck => (2.5, 10.0),
        AgentKind::Bus => (2.55, 12.0),
        AgentKind::Bicycle => (0.6, 1.8),
        AgentKind::Pedestrian => (0.0, 0.0),
    }
}

/// Samples a track along `path` for frames `frames`, using the arc-length
/// schedule `s_of_t` (seconds since frame 0). Samples outside the path are dropped.
pub fn track_on_path(
    id: i64,
    kind: AgentKind,
    path: &Polyline<f64>,
    frame_rate: f64,
    frames: std::ops::Range<i64>,
    s_of_t: impl Fn(f64) -> f64,
) -> Track {
    let mut kept: Vec<(i64, f64)> = Vec::new();
    for f in frames {
        let s = s_of_t(f as f64 / frame_rate);
        if (0.0..=path.length()).contains(&s) {
            kept.push((f, s));
        }
    }
    let positions: Vec<Vec2d> = kept.iter().map(|&(_, s)| path.point_at(s)).collect();
    let vel = central_differences(&positions, frame_rate);
    let acc = central_differences(&vel, frame_rate);
    let samples = kept
        .iter()
        .enumerate()
        .map(|(i, &(f, s))| TrackSample {
            frame: f,
            position: positions[i],
            heading: path.heading_at(s),
            velocity: vel[i],
            acceleration: acc[i],
        })
        .collect();
    let (w, l) = dimensions(kind);
    Track::new(id, kind, w, l, samples)
}

/// One planted interaction in [`planted_recording`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPair {
    pub ego_track_id: i64,
    pub challenger_track_id: i64,
    pub category: ScenarioCategory,
    /// Decoys have a PET above the relevance threshold.
    pub decoy: bool,
}

pub const PLANTED_FRAME_RATE: f64 = 25.0;
pub const PLANTED_SLOT_SECONDS: f64 = 30.0;

#[derive(Clone, Copy)]
enum Challenger {
    /// Vehicle on route `entry -> exit` reaching the crossing `delta` seconds after the ego.
    Vehicle(AgentKind, Compass, Compass, f64),
    /// Vehicle that waits at the yield line for `wait` seconds, then crosses.
    Waiting(AgentKind, Compass, Compass, f64),
    /// Pedestrian on the crosswalk of an arm, reaching the ego's path `delta` seconds after it.
    Walker(Compass, bool, f64),
}

/// Planted recording: 30 slots of 30 s, one ego/challenger pair per slot.
/// 20 pairs have PET well below 6.5 s (8 v2v, 6 v2p, 6 v2b) and 10 decoys
/// meet inside the ROI but cross far apart in time.
pub fn planted_recording() -> (Recording, Vec<PlantedPair>) {
    use AgentKind::{Bicycle, Car};
    use Challenger::*;
    use Compass::*;
    let plan: Vec<((Compass, Compass), Challenger)> = vec![
        // v2v
        ((W, E), Vehicle(Car, S, N, 2.0)),
        ((E, W), Vehicle(Car, N, S, -2.2)),
        ((S, W), Vehicle(Car, N, S, 2.4)),
        ((W, E), Vehicle(Car, N, S, -2.6)),
        ((E, S), Vehicle(Car, W, E, 2.0)),
        ((N, S), Vehicle(Car, E, W, 2.8)),
        ((S, N), Vehicle(Car, E, S, -2.4)),
        ((N, E), Vehicle(Car, S, N, 2.2)),
        // v2p
        ((S, N), Walker(S, true, 2.5)),
        ((N, S), Walker(S, false, -2.5)),
        ((W, E), Walker(E, true, 3.0)),
        ((E, W), Walker(W, false, 2.0)),
        ((S, E), Walker(E, false, -3.0)),
        ((W, S), Walker(S, true, 2.8)),
        // v2b
        ((W, E), Vehicle(Bicycle, S, N, 2.4)),
        ((E, W), Vehicle(Bicycle, N, S, -2.6)),
        ((S, N), Vehicle(Bicycle, E, W, 2.2)),
        ((N, S), Vehicle(Bicycle, W, E, 2.8)),
        ((W, N), Vehicle(Bicycle, E, W, 2.5)),
        ((S, W), Vehicle(Bicycle, W, E, -2.2)),
        // decoys
        ((W, E), Waiting(Car, S, N, 9.0)),
        ((E, W), Waiting(Car, N, S, 10.0)),
        ((W, E), Waiting(Car, N, S, 9.5)),
        ((E, W), Waiting(Car, S, N, 11.0)),
        ((S, N), Walker(S, true, 8.0)),
        ((N, S), Walker(N, true, 8.5)),
        ((W, E), Walker(W, true, 8.2)),
        ((W, E), Waiting(Bicycle, S, N, 9.0)),
        ((E, W), Waiting(Bicycle, N, S, 10.0)),
        ((W, E), Waiting(Bicycle, N, S, 9.5)),
    ];

    let rate = PLANTED_FRAME_RATE;
    let slot_frames = (PLANTED_SLOT_SECONDS * rate) as i64;
    let mut tracks = Vec::new();
    let mut truth = Vec::new();
    for (slot, &((ee, ex), challenger)) in plan.iter().enumerate() {
        let f0 = slot as i64 * slot_frames;
        let t0 = f0 as f64 / rate;
        let frames = f0..f0 + slot_frames;
        let ego_id = 2 * slot as i64 + 1;
        let other_id = ego_id + 1;
        let ego_path = route_polyline(ee, ex);
        let ego_speed = 7.0;
        // ego reaches the crossing 12 s into the slot
        let t_cross = t0 + 12.0;
        let (other_path, other_kind) = match challenger {
            Vehicle(k, a, b, _) | Waiting(k, a, b, _) => (route_polyline(a, b), k),
            Walker(arm, flip, _) => {
                let p = crosswalk_path(arm);
                let p = if flip { Polyline::new(p.points().iter().rev().copied().collect()).unwrap() } else { p };
                (p, AgentKind::Pedestrian)
            }
        };
        let (se, so) = crossing_arc_lengths(&ego_path, &other_path)
            .unwrap_or_else(|| panic!("planted slot {slot}: paths do not cross"));
        tracks.push(track_on_path(ego_id, Car, &ego_path, rate, frames.clone(), |t| se + ego_speed * (t - t_cross)));
        let (track, decoy) = match challenger {
            Vehicle(k, _, _, delta) => {
                let v = if k == Bicycle { 4.5 } else { 7.0 };
                (track_on_path(other_id, k, &other_path, rate, frames, |t| so + v * (t - t_cross - delta)), false)
            }
            Walker(_, _, delta) => {
                let v = 1.3;
                (track_on_path(other_id, AgentKind::Pedestrian, &other_path, rate, frames, |t| so + v * (t - t_cross - delta)), delta.abs() > 6.5)
            }
            Waiting(k, _, _, wait) => {
                // approach at speed, stand at the yield line from t_cross - 2 s, go after `wait`
                let v = if k == Bicycle { 4.5 } else { 7.0 };
                let (_, line_len) = (0.0, ARM_LENGTH - BOX_HALF - 1.0 - 0.5 * dimensions(k).1);
                let t_stop = t_cross - 2.0;
                let t_go = t_stop + wait;
                (
                    track_on_path(other_id, k, &other_path, rate, frames, move |t| {
                        if t < t_stop {
                            line_len + v * (t - t_stop)
                        } else if t < t_go {
                            line_len
                        } else {
                            line_len + v * (t - t_go)
                        }
                    }),
                    true,
                )
            }
        };
        tracks.push(track);
        let category = ScenarioCategory::of(Car, other_kind).expect("ego is a car");
        truth.push(PlantedPair {
            ego_track_id: ego_id,
            challenger_track_id: other_id,
            category,
            decoy,
        });
    }
    let rec = Recording {
        recording_id: 1,
        frame_rate: rate,
        traffic_space_id: SPACE_ID.to_string(),
        tracks,
    };
    (rec, truth)
}

/// Kinds that have vehicle reference points in the bundled map.
pub fn vehicle_kinds() -> BTreeSet<AgentKind> {
    [AgentKind::Car, AgentKind::Truck, AgentKind::Bus, AgentKind::Bicycle].into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanes_follow_right_hand_traffic() {
        let space = four_way_space();
        let in_s = space.lane("in_S").unwrap();
        assert_eq!(in_s.centerline.first(), Vec2d::new(1.75, -50.0));
        let out_s = space.lane("out_S").unwrap();
        assert_eq!(out_s.centerline.last(), Vec2d::new(-1.75, -50.0));
        assert_eq!(space.lanes.len(), 8 + 12);
    }

    #[test]
    fn turn_radii() {
        let right = Polyline::new(connector_points(Compass::S, Compass::E)).unwrap();
        let left = Polyline::new(connector_points(Compass::S, Compass::W)).unwrap();
        assert!((right.curvature_at(0.5 * right.length()).abs() - 1.0 / 5.25).abs() < 1e-2);
        assert!((left.curvature_at(0.5 * left.length()).abs() - 1.0 / 8.75).abs() < 1e-2);
        assert!(left.curvature_at(0.5 * left.length()) > 0.0);
    }

    #[test]
    fn minor_through_crosses_major_through() {
        let space = four_way_space();
        let a = space.lane_idx("c_S_N").unwrap();
        let b = space.lane_idx("c_W_E").unwrap();
        assert!(space
            .conflicts()
            .iter()
            .any(|c| (c.lane_a == a && c.lane_b == b) || (c.lane_a == b && c.lane_b == a)));
    }

    #[test]
    fn planted_layout() {
        let (rec, truth) = planted_recording();
        assert_eq!(rec.tracks.len(), 60);
        assert_eq!(truth.iter().filter(|p| !p.decoy).count(), 20);
        rec.validate().unwrap();
    }
}
