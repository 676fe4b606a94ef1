//! Seeded traffic generation and seeding of agents from recorded tracks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajdata::{AgentKind, Compass, Track, TrafficSpace};
use crate::Vec2d;

use super::params::{BehaviorParams, PedestrianParams, VehicleParams};
use super::route::Route;
use super::single_track::KinematicState;
use super::world::{recorded_state, World};

/// An agent waiting to enter the world at `time` once its start is clear.
#[derive(Debug, Clone)]
pub struct PendingSpawn {
    pub time: f64,
    pub kind: AgentKind,
    pub width: f64,
    pub length: f64,
    pub state: KinematicState<f64>,
    /// Vehicles follow a route; pedestrians walk `waypoints`.
    pub route: Option<Arc<Route>>,
    pub waypoints: Vec<Vec2d>,
    pub preferred_offset: f64,
    pub vehicle_params: Option<VehicleParams<f64>>,
    pub pedestrian_params: Option<PedestrianParams<f64>>,
    /// Minimum distance to any agent for the spawn to go ahead [m].
    pub clearance: f64,
}

/// Poisson arrivals of one agent kind between two reference points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub kind: AgentKind,
    pub entry: Compass,
    pub exit: Compass,
    /// Mean arrivals per hour.
    pub rate_per_hour: f64,
    /// First and last admissible arrival time [s].
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnSpec {
    pub flows: Vec<FlowSpec>,
    /// Std. dev. of each vehicle's preferred in-lane offset [m].
    pub lateral_sigma: f64,
    /// Relative std. dev. of each agent's desired speed.
    pub speed_sigma: f64,
}

impl Default for SpawnSpec {
    fn default() -> Self {
        Self {
            flows: Vec::new(),
            lateral_sigma: 0.25,
            speed_sigma: 0.1,
        }
    }
}

impl SpawnSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lateral_sigma >= 0.0 && self.speed_sigma >= 0.0) {
            return Err(Error::Config("spawn sigmas must be >= 0".into()));
        }
        for (i, f) in self.flows.iter().enumerate() {
            if !(f.rate_per_hour > 0.0 && f.end >= f.start && f.start >= 0.0) {
                return Err(Error::Config(format!("flow {i}: need rate > 0 and 0 <= start <= end")));
            }
        }
        Ok(())
    }
}

fn clamped_normal(rng: &mut ChaCha8Rng, mean: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    if sigma <= 0.0 {
        return mean.clamp(lo, hi);
    }
    Normal::new(mean, sigma).expect("sigma > 0").sample(rng).clamp(lo, hi)
}

fn reference(space: &TrafficSpace, kind: AgentKind, label: Compass) -> Result<Vec2d> {
    space
        .reference_points_for(kind)
        .find(|r| r.label == label)
        .map(|r| r.position)
        .ok_or_else(|| Error::NotFound(format!("reference point {} for {kind}", label.as_str())))
}

/// Draws the arrivals of all flows. Each flow has its own random stream, so
/// adding a flow does not change the arrivals of the others.
pub fn generate_spawns(space: &TrafficSpace, params: &BehaviorParams, spec: &SpawnSpec, seed: u64) -> Result<Vec<PendingSpawn>> {
    spec.validate()?;
    let mut out = Vec::new();
    for (i, flow) in spec.flows.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let gap = Exp::new(flow.rate_per_hour / 3600.0).map_err(|e| Error::Config(format!("flow {i}: {e}")))?;
        let (width, length) = crate::synth::dimensions(flow.kind);
        let mut t = flow.start + gap.sample(&mut rng);
        if flow.kind == AgentKind::Pedestrian {
            let from = reference(space, flow.kind, flow.entry)?;
            let to = reference(space, flow.kind, flow.exit)?;
            let heading = (to - from).angle();
            while t <= flow.end {
                let mut p = params.pedestrian;
                p.desired_speed = clamped_normal(&mut rng, p.desired_speed, spec.speed_sigma * p.desired_speed, 0.5 * p.desired_speed, 1.5 * p.desired_speed);
                out.push(PendingSpawn {
                    time: t,
                    kind: flow.kind,
                    width,
                    length,
                    state: KinematicState::new(from, heading, 0.0),
                    route: None,
                    waypoints: vec![to],
                    preferred_offset: 0.0,
                    vehicle_params: None,
                    pedestrian_params: Some(p),
                    clearance: 2.0 * p.radius,
                });
                t += gap.sample(&mut rng);
            }
            continue;
        }
        let route = Arc::new(Route::between(space, flow.kind, flow.entry, flow.exit)?);
        let base = *params
            .vehicle(flow.kind)
            .ok_or_else(|| Error::Config(format!("flow {i}: no vehicle parameters for {}", flow.kind)))?;
        let lane_w = route.lane_width_at(space, 0.0);
        let cap = (0.5 * (lane_w - width)).max(0.0);
        let start = route.path.point_at(0.0);
        let tangent = route.path.tangent_at(0.0);
        while t <= flow.end {
            let mut p = base;
            p.desired_speed = clamped_normal(&mut rng, p.desired_speed, spec.speed_sigma * p.desired_speed, 0.7 * p.desired_speed, 1.3 * p.desired_speed);
            let q = clamped_normal(&mut rng, 0.0, spec.lateral_sigma, -cap, cap);
            let v = p.desired_speed.min(route.speed_limit_at(space, 0.0));
            out.push(PendingSpawn {
                time: t,
                kind: flow.kind,
                width,
                length,
                state: KinematicState::new(start + tangent.perp() * q, tangent.angle(), v),
                route: Some(route.clone()),
                waypoints: Vec::new(),
                preferred_offset: q,
                vehicle_params: Some(p),
                pedestrian_params: None,
                clearance: length + 2.0,
            });
            t += gap.sample(&mut rng);
        }
    }
    // deterministic admission order: by time, then flow order (stable sort)
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(out)
}

/// Adds an agent-mode copy of `track` to `world`, seeded from its recorded
/// state at `frame`. Vehicles follow the route toward `exit` (or straight on
/// when unknown); pedestrians walk toward their recorded final position.
pub fn seed_from_track(world: &mut World, track: &Track, frame: i64, exit: Option<Compass>, vehicle_params: Option<VehicleParams<f64>>) -> Result<()> {
    let state = recorded_state(track, frame, 0.0)
        .ok_or_else(|| Error::NotFound(format!("track {} has no sample at frame {frame}", track.track_id)))?;
    if track.kind == AgentKind::Pedestrian {
        let goal = track.samples.last().map(|s| s.position).unwrap_or(state.position);
        return world.add_pedestrian(track.track_id, state, vec![goal], None);
    }
    let route = Route::from_pose(&world.space, track.kind, state.position, state.heading, exit);
    let pr = route.path.project(state.position);
    world.add_vehicle(track.track_id, track.kind, track.width, track.length, state, route, Some(pr.lateral), vehicle_params)
}
