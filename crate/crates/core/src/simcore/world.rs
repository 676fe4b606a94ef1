//! Simulation world and the synchronous step.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Aabb;
use crate::num::wrap_angle;
use crate::trajdata::{footprint_of, AgentKind, Footprint, Track, TrafficSpace};
use crate::Vec2d;

use super::log::{LogRow, SimLog};
use super::params::{BehaviorParams, PedestrianParams, VehicleParams};
use super::pedestrian::{pedestrian_force, DiscNeighbor, Obstacle};
use super::route::Route;
use super::single_track::{integrate, pure_pursuit_steer, steer_limit, Integrator, KinematicState};
use super::spawn::PendingSpawn;
use super::vehicle::{vehicle_force, AgentView, ForceTerms};

/// Time headway a spawn needs in front of it, on top of its clearance [s].
const HEADWAY: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step length [s].
    pub dt: f64,
    /// Simulated time [s].
    pub duration: f64,
    pub seed: u64,
    pub integrator: Integrator,
    pub terms: ForceTerms,
    /// Log every n-th step.
    pub log_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            duration: 60.0,
            seed: 0,
            integrator: Integrator::Heun,
            terms: ForceTerms::default(),
            log_every: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("sim.dt must be > 0".into()));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Config("sim.duration must be >= 0".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("sim.log_every must be >= 1".into()));
        }
        Ok(())
    }

    /// The step must be at most half the period of the data it is compared with.
    pub fn validate_for_data(&self, frame_rate: f64) -> Result<()> {
        self.validate()?;
        if self.dt > 0.5 / frame_rate + 1e-12 {
            return Err(Error::Config(format!(
                "sim.dt = {} exceeds half the data frame period ({})",
                self.dt,
                0.5 / frame_rate
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Replayed,
    Agent,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Replayed => "replayed",
            Mode::Agent => "agent",
        }
    }
}

/// Actuation for an externally controlled vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Actuate { accel: f64, steer: f64 },
    /// Place the agent exactly (used to reproduce recorded motion).
    Pose { position: Vec2d, heading: f64, speed: f64 },
}

#[derive(Debug, Clone)]
pub enum Control {
    Vehicle {
        params: VehicleParams<f64>,
        route: Arc<Route>,
        s: f64,
        /// Lateral offset from the centerline tracked by the spring-damper.
        offset: f64,
        offset_rate: f64,
        preferred_offset: f64,
    },
    Pedestrian {
        params: PedestrianParams<f64>,
        waypoints: Vec<Vec2d>,
        next: usize,
    },
    /// Follows recorded samples.
    Replay { track: Arc<Track> },
    /// Driven by commands set before each step.
    External {
        wheelbase: f64,
        max_steer: f64,
        command: Option<Command>,
    },
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub id: i64,
    pub kind: AgentKind,
    pub length: f64,
    pub width: f64,
    pub state: KinematicState<f64>,
    pub control: Control,
    pub active: bool,
}

impl Agent {
    pub fn mode(&self) -> Mode {
        match self.control {
            Control::Replay { .. } => Mode::Replayed,
            _ => Mode::Agent,
        }
    }

    pub fn footprint(&self, pedestrian_radius: f64) -> Footprint {
        footprint_of(self.kind, self.length, self.width, self.state.position, self.state.heading, pedestrian_radius)
    }
}

/// Clock that maps simulation steps onto recording frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayClock {
    pub frame0: i64,
    pub frame_rate: f64,
    /// Simulation steps per recording frame.
    pub substeps: usize,
}

impl ReplayClock {
    /// Recording frame and fraction at a step.
    pub fn at(&self, step: u64) -> (i64, f64) {
        let n = self.substeps as u64;
        (self.frame0 + (step / n) as i64, (step % n) as f64 / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Collision {
    pub step: u64,
    pub a: i64,
    pub b: i64,
}

#[derive(Debug, Clone)]
pub struct World {
    pub space: Arc<TrafficSpace>,
    pub params: BehaviorParams,
    /// Sorted by id.
    pub agents: Vec<Agent>,
    pub step: u64,
    pub clock: Option<ReplayClock>,
    pub pending: Vec<PendingSpawn>,
    pub collisions: Vec<Collision>,
    touching: BTreeSet<(i64, i64)>,
    next_spawn_id: i64,
}

struct Update {
    state: KinematicState<f64>,
    control: Option<Control>,
    active: bool,
}

/// Interpolated recorded pose of a track; `None` outside its lifetime.
pub fn recorded_state(track: &Track, frame: i64, frac: f64) -> Option<KinematicState<f64>> {
    let a = track.sample_at(frame)?;
    let pose = |s: &crate::trajdata::TrackSample| KinematicState {
        position: s.position,
        heading: s.heading,
        speed: s.velocity.norm(),
        steer: 0.0,
    };
    if frac == 0.0 {
        return Some(pose(a));
    }
    let b = track.sample_at(frame + 1)?;
    Some(KinematicState {
        position: a.position.lerp(b.position, frac),
        heading: wrap_angle(a.heading + wrap_angle(b.heading - a.heading) * frac),
        speed: a.velocity.norm() + (b.velocity.norm() - a.velocity.norm()) * frac,
        steer: 0.0,
    })
}

impl World {
    pub fn new(space: Arc<TrafficSpace>, params: BehaviorParams) -> Self {
        Self {
            space,
            params,
            agents: Vec::new(),
            step: 0,
            clock: None,
            pending: Vec::new(),
            collisions: Vec::new(),
            touching: BTreeSet::new(),
            next_spawn_id: 1,
        }
    }

    pub fn with_clock(mut self, clock: ReplayClock) -> Self {
        self.clock = Some(clock);
        self
    }

    fn insert(&mut self, agent: Agent) -> Result<()> {
        match self.agents.binary_search_by_key(&agent.id, |a| a.id) {
            Ok(_) => Err(Error::Config(format!("duplicate agent id {}", agent.id))),
            Err(i) => {
                self.next_spawn_id = self.next_spawn_id.max(agent.id + 1);
                self.agents.insert(i, agent);
                Ok(())
            }
        }
    }

    pub fn agent(&self, id: i64) -> Option<&Agent> {
        self.agents.binary_search_by_key(&id, |a| a.id).ok().map(|i| &self.agents[i])
    }

    pub fn agent_mut(&mut self, id: i64) -> Option<&mut Agent> {
        self.agents.binary_search_by_key(&id, |a| a.id).ok().map(move |i| &mut self.agents[i])
    }

    /// Adds a route-following vehicle; its arc length and offset come from projecting the pose.
    #[allow(clippy::too_many_arguments)]
    pub fn add_vehicle(
        &mut self,
        id: i64,
        kind: AgentKind,
        width: f64,
        length: f64,
        state: KinematicState<f64>,
        route: Route,
        preferred_offset: Option<f64>,
        params: Option<VehicleParams<f64>>,
    ) -> Result<()> {
        let params = match params {
            Some(p) => p,
            None => *self
                .params
                .vehicle(kind)
                .ok_or_else(|| Error::Config(format!("agent {id}: {kind} is not a vehicle")))?,
        };
        params.validate()?;
        let pr = route.path.project(state.position);
        self.insert(Agent {
            id,
            kind,
            length,
            width,
            state,
            control: Control::Vehicle {
                params,
                route: Arc::new(route),
                s: pr.s,
                offset: pr.lateral,
                offset_rate: 0.0,
                preferred_offset: preferred_offset.unwrap_or(pr.lateral),
            },
            active: true,
        })
    }

    pub fn add_pedestrian(&mut self, id: i64, state: KinematicState<f64>, waypoints: Vec<Vec2d>, params: Option<PedestrianParams<f64>>) -> Result<()> {
        if waypoints.is_empty() {
            return Err(Error::Config(format!("agent {id}: pedestrian needs at least one waypoint")));
        }
        let params = params.unwrap_or(self.params.pedestrian);
        params.validate()?;
        self.insert(Agent {
            id,
            kind: AgentKind::Pedestrian,
            length: 0.0,
            width: 0.0,
            state,
            control: Control::Pedestrian {
                params,
                waypoints,
                next: 0,
            },
            active: true,
        })
    }

    /// Adds an agent that follows its recorded samples; requires a clock.
    pub fn add_replayed(&mut self, track: Arc<Track>) -> Result<()> {
        let clock = self
            .clock
            .ok_or_else(|| Error::Config("replayed agents need a replay clock".into()))?;
        let (f, frac) = clock.at(self.step);
        let state = recorded_state(&track, f, frac);
        self.insert(Agent {
            id: track.track_id,
            kind: track.kind,
            length: track.length,
            width: track.width,
            active: state.is_some(),
            state: state.unwrap_or_else(|| KinematicState::new(Vec2d::zero(), 0.0, 0.0)),
            control: Control::Replay { track },
        })
    }

    pub fn add_external(&mut self, id: i64, kind: AgentKind, width: f64, length: f64, state: KinematicState<f64>, wheelbase: f64, max_steer: f64) -> Result<()> {
        self.insert(Agent {
            id,
            kind,
            length,
            width,
            state,
            control: Control::External {
                wheelbase,
                max_steer,
                command: None,
            },
            active: true,
        })
    }

    pub fn set_command(&mut self, id: i64, command: Command) -> Result<()> {
        match self.agent_mut(id).map(|a| &mut a.control) {
            Some(Control::External { command: c, .. }) => {
                *c = Some(command);
                Ok(())
            }
            _ => Err(Error::NotFound(format!("external agent {id}"))),
        }
    }

    /// Replaces an agent's control (e.g. replayed -> agent) keeping its state.
    pub fn set_control(&mut self, id: i64, control: Control) -> Result<()> {
        let a = self
            .agent_mut(id)
            .ok_or_else(|| Error::NotFound(format!("agent {id}")))?;
        if let Control::Vehicle { route, .. } = &control {
            let pr = route.path.project(a.state.position);
            a.control = match control {
                Control::Vehicle {
                    params,
                    route,
                    preferred_offset,
                    ..
                } => Control::Vehicle {
                    params,
                    route,
                    s: pr.s,
                    offset: pr.lateral,
                    offset_rate: 0.0,
                    preferred_offset,
                },
                _ => unreachable!(),
            };
        } else {
            a.control = control;
        }
        Ok(())
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.step as f64 * dt
    }

    fn views(&self) -> Vec<AgentView> {
        self.agents
            .iter()
            .filter(|a| a.active)
            .map(|a| {
                let (route, s) = match &a.control {
                    Control::Vehicle { route, s, .. } => (Some(route.clone()), *s),
                    _ => (None, 0.0),
                };
                AgentView {
                    id: a.id,
                    kind: a.kind,
                    length: a.length,
                    width: a.width,
                    state: a.state,
                    route,
                    s,
                }
            })
            .collect()
    }

    fn spawn_due(&mut self, cfg: &SimConfig) -> Result<()> {
        let now = self.time(cfg.dt);
        let mut keep = Vec::new();
        let pending = std::mem::take(&mut self.pending);
        for p in pending {
            if p.time > now + 1e-12 {
                keep.push(p);
                continue;
            }
            let start = p.state.position;
            let blocked = self
                .agents
                .iter()
                .any(|a| a.active && a.state.position.dist(start) < p.clearance + p.state.speed * HEADWAY);
            if blocked {
                keep.push(p);
                continue;
            }
            let id = self.next_spawn_id;
            match p.route {
                Some(route) => self.add_vehicle(id, p.kind, p.width, p.length, p.state, (*route).clone(), Some(p.preferred_offset), p.vehicle_params)?,
                None => self.add_pedestrian(id, p.state, p.waypoints.clone(), p.pedestrian_params)?,
            }
        }
        self.pending = keep;
        Ok(())
    }

    fn update_agent(&self, a: &Agent, views: &[AgentView], cfg: &SimConfig) -> Result<Update> {
        let dt = cfg.dt;
        let ped_r = self.params.pedestrian.radius;
        match &a.control {
            Control::Replay { track } => {
                let clock = self.clock.expect("replayed agent without clock");
                let (f, frac) = clock.at(self.step + 1);
                Ok(match recorded_state(track, f, frac) {
                    Some(state) => Update { state, control: None, active: true },
                    None => Update {
                        state: a.state,
                        control: None,
                        // before its first sample an agent may still appear later
                        active: false,
                    },
                })
            }
            Control::External { wheelbase, max_steer, command } => {
                let state = match command {
                    Some(Command::Actuate { accel, steer }) => {
                        if !(accel.is_finite() && steer.is_finite()) {
                            return Err(Error::NonFinite {
                                agent_id: a.id,
                                step: self.step,
                                detail: format!("external command accel={accel} steer={steer}"),
                            });
                        }
                        integrate(&a.state, *accel, steer.clamp(-max_steer, *max_steer), *wheelbase, dt, cfg.integrator)
                    }
                    Some(Command::Pose { position, heading, speed }) => KinematicState {
                        position: *position,
                        heading: *heading,
                        speed: *speed,
                        steer: 0.0,
                    },
                    None => integrate(&a.state, 0.0, 0.0, *wheelbase, dt, cfg.integrator),
                };
                Ok(Update { state, control: None, active: true })
            }
            Control::Pedestrian { params, waypoints, next } => {
                let mut next = *next;
                while next + 1 < waypoints.len() && a.state.position.dist(waypoints[next]) < 0.5 {
                    next += 1;
                }
                let goal = waypoints[next];
                if next + 1 == waypoints.len() && a.state.position.dist(goal) < 0.3 {
                    return Ok(Update { state: a.state, control: None, active: false });
                }
                let neighbors: Vec<DiscNeighbor<f64>> = views
                    .iter()
                    .filter(|o| o.id != a.id && o.state.position.dist(a.state.position) < 10.0)
                    .map(|o| DiscNeighbor {
                        position: o.state.position,
                        radius: o.radius(ped_r),
                    })
                    .collect();
                let obstacles: [Obstacle<f64>; 0] = [];
                let v = a.state.velocity();
                let f = pedestrian_force(a.state.position, v, a.state.heading, params, goal, &neighbors, &obstacles);
                let total = f.total();
                if !total.is_finite() {
                    return Err(Error::NonFinite {
                        agent_id: a.id,
                        step: self.step,
                        detail: format!("pedestrian force driving={:?} interaction={:?} boundary={:?}", f.driving, f.interaction, f.boundary),
                    });
                }
                let mut v_new = v + total * dt;
                let vmax = 1.3 * params.desired_speed;
                if v_new.norm() > vmax {
                    v_new = v_new * (vmax / v_new.norm());
                }
                let position = match cfg.integrator {
                    Integrator::Euler => a.state.position + v_new * dt,
                    Integrator::Heun => a.state.position + (v + v_new) * (0.5 * dt),
                };
                let speed = v_new.norm();
                let heading = if speed > 1e-6 { v_new.angle() } else { a.state.heading };
                let mut control = a.control.clone();
                if let Control::Pedestrian { next: n, .. } = &mut control {
                    *n = next;
                }
                Ok(Update {
                    state: KinematicState { position, heading, speed, steer: 0.0 },
                    control: Some(control),
                    active: true,
                })
            }
            Control::Vehicle {
                params,
                route,
                s,
                offset,
                offset_rate,
                preferred_offset,
            } => {
                let pr = route.path.project_window(a.state.position, *s - 2.0, *s + 10.0);
                let s_now = pr.s.max(*s);
                if s_now >= route.length() - 0.5 {
                    return Ok(Update { state: a.state, control: None, active: false });
                }
                let me = AgentView {
                    id: a.id,
                    kind: a.kind,
                    length: a.length,
                    width: a.width,
                    state: a.state,
                    route: Some(route.clone()),
                    s: s_now,
                };
                let demand = vehicle_force(&me, params, route, pr.lateral, *preferred_offset, views, &self.space, cfg.terms, ped_r)?;
                // spring-damper on the tracked offset
                let cap = (0.5 * (route.lane_width_at(&self.space, s_now) - a.width)).max(0.0);
                let acc_lat = params.lateral_stiffness * (demand.lateral_offset - offset) - params.lateral_damping * offset_rate;
                let rate = offset_rate + acc_lat * dt;
                let q = (offset + rate * dt).clamp(-cap, cap);
                let rate = if q.abs() >= cap && q * rate > 0.0 { 0.0 } else { rate };
                // pure pursuit toward the offset reference
                let v = a.state.speed;
                let look = (s_now + (1.0f64 * v).max(5.0)).min(route.length() + 5.0);
                let target = route.path.point_at(look) + route.path.tangent_at(look).perp() * q;
                let lim = steer_limit(v, params.max_lateral_accel, params.wheelbase, params.max_steer);
                let steer = pure_pursuit_steer(a.state.position, a.state.heading, target, params.wheelbase).clamp(-lim, lim);
                let state = integrate(&a.state, demand.accel, steer, params.wheelbase, dt, cfg.integrator);
                if !state.is_finite() {
                    return Err(Error::NonFinite {
                        agent_id: a.id,
                        step: self.step,
                        detail: format!("vehicle demand {:?}, steer {steer}", demand.terms),
                    });
                }
                Ok(Update {
                    state,
                    control: Some(Control::Vehicle {
                        params: *params,
                        route: route.clone(),
                        s: s_now,
                        offset: q,
                        offset_rate: rate,
                        preferred_offset: *preferred_offset,
                    }),
                    active: true,
                })
            }
        }
    }

    /// Advances all agents by one step. Forces are computed from the frozen
    /// state for every agent, then applied in id order.
    pub fn step(&mut self, cfg: &SimConfig) -> Result<()> {
        self.spawn_due(cfg)?;
        let views = self.views();
        let updates: Vec<Option<Result<Update>>> = self
            .agents
            .par_iter()
            .map(|a| match (&a.control, a.active) {
                (Control::Replay { .. }, _) => Some(self.update_agent(a, &views, cfg)),
                (_, true) => Some(self.update_agent(a, &views, cfg)),
                (_, false) => None,
            })
            .collect();
        let mut applied = Vec::with_capacity(updates.len());
        for u in updates {
            applied.push(u.transpose()?);
        }
        for (a, u) in self.agents.iter_mut().zip(applied) {
            if let Some(u) = u {
                a.state = u.state;
                a.active = u.active;
                if let Some(c) = u.control {
                    a.control = c;
                }
            }
            if let Control::External { command, .. } = &mut a.control {
                *command = None;
            }
        }
        self.step += 1;
        self.detect_collisions();
        Ok(())
    }

    fn detect_collisions(&mut self) {
        let ped_r = self.params.pedestrian.radius;
        let active: Vec<(&Agent, Footprint, Aabb<f64>)> = self
            .agents
            .iter()
            .filter(|a| a.active)
            .map(|a| {
                let fp = a.footprint(ped_r);
                let r = 0.5 * a.length.hypot(a.width) + ped_r;
                let b = Aabb::from_points(&[a.state.position]).inflate(r);
                (a, fp, b)
            })
            .collect();
        let mut now = BTreeSet::new();
        for i in 0..active.len() {
            for j in (i + 1)..active.len() {
                let (a, fa, ba) = &active[i];
                let (b, fb, bb) = &active[j];
                if a.mode() == Mode::Replayed && b.mode() == Mode::Replayed {
                    continue;
                }
                if ba.overlaps(bb) && fa.overlaps(fb) {
                    now.insert((a.id, b.id));
                }
            }
        }
        for &(a, b) in now.difference(&self.touching) {
            self.collisions.push(Collision { step: self.step, a, b });
        }
        self.touching = now;
    }

    /// Log rows for the current step.
    pub fn log_rows(&self) -> Vec<LogRow> {
        let frame = match self.clock {
            Some(c) => c.at(self.step).0,
            None => self.step as i64,
        };
        self.agents
            .iter()
            .filter(|a| a.active)
            .map(|a| LogRow {
                frame,
                agent_id: a.id,
                kind: a.kind,
                x: a.state.position.x,
                y: a.state.position.y,
                heading: a.state.heading,
                v: a.state.speed,
                delta: a.state.steer,
                mode: a.mode(),
            })
            .collect()
    }
}

/// Runs `cfg.steps()` steps, logging the initial state and every `log_every`-th step.
pub fn run_scenario(mut world: World, cfg: &SimConfig) -> Result<(SimLog, World)> {
    cfg.validate()?;
    let mut log = SimLog::new(cfg.dt * cfg.log_every as f64);
    log.push_frame(world.log_rows());
    for i in 1..=cfg.steps() {
        world.step(cfg)?;
        if i % cfg.log_every == 0 {
            log.push_frame(world.log_rows());
        }
    }
    log.collisions = world.collisions.clone();
    Ok((log, world))
}
