//! Adaptive replay-to-sim harness.
//!
//! A recorded scenario is replayed around an ego vehicle driven by an
//! [`EgoPolicy`]. While the ego stays close to the recorded human trajectory
//! everyone else follows the recording. At the first frame where the
//! dissimilarity exceeds the threshold (the trigger), every other participant
//! is handed to the simulation models, seeded from its recorded state at that
//! frame. From a triggered session the harness can rewind and rerun the
//! interactive part with varied model parameters.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::ParamSpec;
use crate::error::{Error, Result};
use crate::extraction::{buffer_half_width, compute_pet, conflict_path, conflict::find_conflict_areas, ConcreteScenario, IntersectingScenario};
use crate::maneuvers::LabelTable;
use crate::num::wrap_angle;
use crate::simcore::{recorded_state, seed_from_track, Agent, BehaviorParams, Command, KinematicState, ReplayClock, SimConfig, SimLog, VehicleParams, World, LOG_HEADER};
use crate::trajdata::{AgentKind, Track, TrafficSpace};

/// What an ego policy sees before each simulation step.
pub struct EgoObservation<'a> {
    pub ego_id: i64,
    /// Recording frame and fraction the command must reach by the end of the step.
    pub frame: i64,
    pub frac: f64,
    pub dt: f64,
    pub state: KinematicState<f64>,
    /// Ground truth of every active agent, the ego included.
    pub agents: &'a [Agent],
    pub space: &'a TrafficSpace,
}

/// Controller under test, called once per simulation step.
pub trait EgoPolicy: Send {
    fn id(&self) -> &str;

    /// When set, the ego is driven by the built-in vehicle model with these
    /// parameters instead of by [`EgoPolicy::command`].
    fn model(&self) -> Option<VehicleParams<f64>> {
        None
    }

    fn command(&mut self, obs: &EgoObservation<'_>) -> Command;
}

/// Reproduces the recorded ego trajectory exactly.
pub struct SelfReplayPolicy {
    pub track: Arc<Track>,
}

impl EgoPolicy for SelfReplayPolicy {
    fn id(&self) -> &str {
        "self-replay"
    }

    fn command(&mut self, obs: &EgoObservation<'_>) -> Command {
        let s = recorded_state(&self.track, obs.frame, obs.frac).unwrap_or(obs.state);
        Command::Pose {
            position: s.position,
            heading: s.heading,
            speed: s.speed,
        }
    }
}

/// Follows the recorded ego trajectory with a lateral offset (to the left of
/// travel) that grows at `rate` [m/s] from `start_frame` up to `max_offset`.
pub struct LateralRampPolicy {
    pub track: Arc<Track>,
    pub frame_rate: f64,
    pub start_frame: i64,
    pub rate: f64,
    pub max_offset: f64,
}

impl LateralRampPolicy {
    pub fn offset_at(&self, frame: i64, frac: f64) -> f64 {
        let t = ((frame - self.start_frame) as f64 + frac) / self.frame_rate;
        (self.rate * t.max(0.0)).min(self.max_offset)
    }
}

impl EgoPolicy for LateralRampPolicy {
    fn id(&self) -> &str {
        "lateral-ramp"
    }

    fn command(&mut self, obs: &EgoObservation<'_>) -> Command {
        let s = recorded_state(&self.track, obs.frame, obs.frac).unwrap_or(obs.state);
        let q = self.offset_at(obs.frame, obs.frac);
        Command::Pose {
            position: s.position + crate::Vec2d::from_angle(s.heading).perp() * q,
            heading: s.heading,
            speed: s.speed,
        }
    }
}

/// The simulation's own vehicle model with its own parameters.
pub struct BaselinePolicy {
    pub params: VehicleParams<f64>,
}

impl BaselinePolicy {
    /// A more cautious driver than the default car: slower, larger gaps.
    pub fn cautious() -> Self {
        let mut params = VehicleParams::car();
        params.desired_speed *= 0.85;
        params.yield_gap *= 1.5;
        params.max_accel *= 0.8;
        Self { params }
    }
}

impl EgoPolicy for BaselinePolicy {
    fn id(&self) -> &str {
        "baseline"
    }

    fn model(&self) -> Option<VehicleParams<f64>> {
        Some(self.params)
    }

    fn command(&mut self, _obs: &EgoObservation<'_>) -> Command {
        Command::Actuate { accel: 0.0, steer: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityConfig {
    pub position_weight: f64,
    pub heading_weight: f64,
    pub speed_weight: f64,
    pub threshold: f64,
}

impl Default for DissimilarityConfig {
    fn default() -> Self {
        Self {
            position_weight: 1.0,
            heading_weight: 0.0,
            speed_weight: 0.0,
            threshold: 1.5,
        }
    }
}

impl DissimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.position_weight, self.heading_weight, self.speed_weight];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("dissimilarity weights must be finite, >= 0 and not all zero".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config("dissimilarity.threshold must be > 0".into()));
        }
        Ok(())
    }
}

/// `sqrt(w_p |dp|^2 + w_h dh^2 + w_v dv^2)` with the heading difference wrapped.
pub fn dissimilarity(ego: &KinematicState<f64>, recorded: &KinematicState<f64>, cfg: &DissimilarityConfig) -> f64 {
    let dp = ego.position.dist(recorded.position);
    let dh = wrap_angle(ego.heading - recorded.heading);
    let dv = ego.speed - recorded.speed;
    (cfg.position_weight * dp * dp + cfg.heading_weight * dh * dh + cfg.speed_weight * dv * dv).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub sim: SimConfig,
    pub dissimilarity: DissimilarityConfig,
    /// Vertex spacing of the paths used to find conflict areas [m].
    pub path_spacing: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            dissimilarity: DissimilarityConfig::default(),
            path_spacing: 0.5,
        }
    }
}

/// Everything a session needs besides the policy.
#[derive(Debug, Clone)]
pub struct ReplayInputs {
    pub scenario: ConcreteScenario,
    /// Branch labels of the scenario's tracks; they fix routes at takeover.
    pub labels: LabelTable,
    pub space: Arc<TrafficSpace>,
    pub params: BehaviorParams,
    pub ego_id: i64,
    pub cfg: ReplayConfig,
}

impl ReplayInputs {
    pub fn new(scenario: ConcreteScenario, labels: LabelTable, space: Arc<TrafficSpace>, params: BehaviorParams, cfg: ReplayConfig) -> Self {
        let ego_id = scenario.core.ego_track_id;
        Self {
            scenario,
            labels,
            space,
            params,
            ego_id,
            cfg,
        }
    }

    fn ego_track(&self) -> Result<&Track> {
        let t = self
            .scenario
            .participant(self.ego_id)
            .ok_or_else(|| Error::NotFound(format!("ego track {} in scenario", self.ego_id)))?;
        if t.kind != AgentKind::Car {
            return Err(Error::Config(format!("ego track {} is a {}, expected a car", self.ego_id, t.kind)));
        }
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        self.cfg.sim.validate()?;
        self.cfg.sim.validate_for_data(self.scenario.frame_rate)?;
        self.cfg.dissimilarity.validate()?;
        self.params.validate()?;
        self.ego_track()?;
        Ok(())
    }

    fn clock(&self, frame0: i64) -> Result<ReplayClock> {
        Ok(ReplayClock {
            frame0,
            frame_rate: self.scenario.frame_rate,
            substeps: crate::calibrate::substeps(self.scenario.frame_rate, self.cfg.sim.dt)?,
        })
    }

    fn challenger_id(&self) -> Option<i64> {
        let c = self.scenario.core.challenger_track_id;
        (c != self.ego_id).then_some(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Replay,
    Agent,
}

impl SessionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionMode::Replay => "replay",
            SessionMode::Agent => "agent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub frame: i64,
    pub dissimilarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// The scenario window was played to its end.
    WindowEnd,
    /// The recorded ego track ended while still replaying.
    EgoTrackEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub frame: i64,
    /// Absent once the recorded ego track has ended.
    pub dissimilarity: Option<f64>,
    pub mode: SessionMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySession {
    pub ego_id: i64,
    pub challenger_id: Option<i64>,
    pub policy_id: String,
    pub start_frame: i64,
    pub end_frame: i64,
    pub mode: SessionMode,
    pub trigger: Option<Trigger>,
    pub trace: Vec<TraceEntry>,
    pub log: SimLog,
    pub end: EndReason,
    /// PET between ego and challenger in the result log [s].
    pub pet: Option<f64>,
    /// Label of the parameter variation of a rewound run.
    pub variation: Option<String>,
    pub possible_false_positive: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub ego_id: i64,
    pub challenger_id: Option<i64>,
    pub policy: String,
    pub variation: Option<String>,
    pub start_frame: i64,
    pub end_frame: i64,
    pub end: EndReason,
    pub mode: SessionMode,
    pub trigger_frame: Option<i64>,
    pub trigger_dissimilarity: Option<f64>,
    pub min_pet: Option<f64>,
    pub collisions: usize,
    pub ego_collision: bool,
    pub possible_false_positive: Option<bool>,
}

pub const SESSION_LOG_HEADER_EXTRA: &str = "dissimilarity,session_mode";

impl ReplaySession {
    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            ego_id: self.ego_id,
            challenger_id: self.challenger_id,
            policy: self.policy_id.clone(),
            variation: self.variation.clone(),
            start_frame: self.start_frame,
            end_frame: self.end_frame,
            end: self.end,
            mode: self.mode,
            trigger_frame: self.trigger.map(|t| t.frame),
            trigger_dissimilarity: self.trigger.map(|t| t.dissimilarity),
            min_pet: self.pet,
            collisions: self.log.collisions.len(),
            ego_collision: self.log.collisions.iter().any(|c| c.a == self.ego_id || c.b == self.ego_id),
            possible_false_positive: self.possible_false_positive,
        }
    }

    /// Simulation log rows extended by the frame's dissimilarity and session mode.
    pub fn write_log_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{LOG_HEADER},{SESSION_LOG_HEADER_EXTRA}")?;
        let by_frame: BTreeMap<i64, &TraceEntry> = self.trace.iter().map(|e| (e.frame, e)).collect();
        for r in self.log.rows() {
            let e = by_frame.get(&r.frame);
            let d = e.and_then(|e| e.dissimilarity).map(|d| d.to_string()).unwrap_or_default();
            let m = e.map_or("", |e| e.mode.as_str());
            writeln!(w, "{},{d},{m}", r.csv_line())?;
        }
        Ok(())
    }

    pub fn log_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_log_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// The session's result as a scenario over the same window and core pair.
    pub fn to_scenario(&self, original: &ConcreteScenario, space_pedestrian_radius: f64, path_spacing: f64) -> ConcreteScenario {
        let rec = self.log.to_recording(original.recording_id, &original.traffic_space_id, &|id, kind| {
            original
                .participant(id)
                .map(|t| (t.width, t.length))
                .unwrap_or_else(|| crate::synth::dimensions(kind))
        });
        let mut participants: Vec<Track> = Vec::new();
        let core_ids = [original.core.ego_track_id, original.core.challenger_track_id];
        for id in core_ids {
            if let Some(t) = rec.track(id) {
                participants.push(t.clone());
            }
        }
        participants.extend(rec.tracks.iter().filter(|t| !core_ids.contains(&t.track_id)).cloned());
        let mut core: IntersectingScenario = original.core.clone();
        core.frame_window = (self.start_frame, self.end_frame);
        if let (Some(a), Some(b)) = (rec.track(core_ids[0]), rec.track(core_ids[1])) {
            core.pet = pair_pet(a, b, rec.frame_rate, space_pedestrian_radius, path_spacing);
        }
        ConcreteScenario {
            core,
            participants,
            recording_id: original.recording_id,
            traffic_space_id: original.traffic_space_id.clone(),
            frame_rate: original.frame_rate,
        }
    }
}

fn pair_pet(a: &Track, b: &Track, frame_rate: f64, ped_r: f64, spacing: f64) -> crate::extraction::PetResult {
    let pa = conflict_path(a, spacing);
    let pb = conflict_path(b, spacing);
    match find_conflict_areas(&pa, buffer_half_width(a, ped_r), &pb, buffer_half_width(b, ped_r)) {
        Ok(areas) if !areas.is_empty() => compute_pet(a, b, &areas, frame_rate, ped_r),
        Ok(_) => crate::extraction::PetResult::absent("no conflict area"),
        Err(e) => crate::extraction::PetResult::absent(e.to_string()),
    }
}

fn log_pet(inputs: &ReplayInputs, log: &SimLog) -> Option<f64> {
    let challenger = inputs.challenger_id()?;
    let rec = log.to_recording(inputs.scenario.recording_id, &inputs.scenario.traffic_space_id, &|id, kind| {
        inputs
            .scenario
            .participant(id)
            .map(|t| (t.width, t.length))
            .unwrap_or_else(|| crate::synth::dimensions(kind))
    });
    let a = rec.track(inputs.ego_id)?;
    let b = rec.track(challenger)?;
    pair_pet(a, b, rec.frame_rate, inputs.params.pedestrian.radius, inputs.cfg.path_spacing).pet
}

fn exit_of(inputs: &ReplayInputs, id: i64) -> Option<crate::trajdata::Compass> {
    inputs.labels.get(id).and_then(|l| l.label).map(|l| l.exit)
}

fn check_command(cmd: &Command, policy: &str, frame: i64) -> Result<()> {
    let finite = match cmd {
        Command::Actuate { accel, steer } => accel.is_finite() && steer.is_finite(),
        Command::Pose { position, heading, speed } => position.x.is_finite() && position.y.is_finite() && heading.is_finite() && speed.is_finite(),
    };
    if finite {
        Ok(())
    } else {
        Err(Error::PolicyOutput {
            policy: policy.to_string(),
            frame,
        })
    }
}

/// Clamps an acceleration demand to the ego car's actuation limits.
fn clamp_command(cmd: Command, car: &VehicleParams<f64>) -> Command {
    match cmd {
        Command::Actuate { accel, steer } => Command::Actuate {
            accel: accel.clamp(-car.max_decel, car.max_accel),
            steer,
        },
        pose => pose,
    }
}

/// Adds the ego at `frame` with `state`, either as the model vehicle or as an
/// externally commanded car.
fn add_ego(world: &mut World, inputs: &ReplayInputs, policy: &dyn EgoPolicy, state: KinematicState<f64>, frame: i64) -> Result<()> {
    let track = inputs.ego_track()?;
    match policy.model() {
        Some(params) => {
            let mut t = track.clone();
            if let Some(s) = t.samples.iter_mut().find(|s| s.frame == frame) {
                s.position = state.position;
                s.heading = state.heading;
                s.velocity = crate::Vec2d::from_angle(state.heading) * state.speed;
            }
            seed_from_track(world, &t, frame, exit_of(inputs, inputs.ego_id), Some(params))
        }
        None => {
            let car = &inputs.params.car;
            world.add_external(inputs.ego_id, track.kind, track.width, track.length, state, car.wheelbase, car.max_steer)
        }
    }
}

/// Hands every non-ego participant to the models at `frame`; those that have
/// not appeared yet are queued for their first recorded frame.
fn switch_to_agents(world: &mut World, inputs: &ReplayInputs, frame: i64, queued: &mut BTreeMap<i64, Vec<i64>>) -> Result<()> {
    for t in inputs.scenario.participants.iter().filter(|t| t.track_id != inputs.ego_id) {
        world.agents.retain(|a| a.id != t.track_id);
        let first = t.samples.first().map_or(i64::MAX, |s| s.frame);
        let last = t.samples.last().map_or(i64::MIN, |s| s.frame);
        if first > frame {
            queued.entry(first).or_default().push(t.track_id);
        } else if last >= frame {
            seed_from_track(world, t, frame, exit_of(inputs, t.track_id), None)?;
        }
    }
    Ok(())
}

fn spawn_queued(world: &mut World, inputs: &ReplayInputs, frame: i64, queued: &BTreeMap<i64, Vec<i64>>) -> Result<()> {
    for id in queued.get(&frame).into_iter().flatten() {
        let t = inputs.scenario.participant(*id).expect("queued participant");
        seed_from_track(world, t, frame, exit_of(inputs, *id), None)?;
    }
    Ok(())
}

struct Run<'a> {
    inputs: &'a ReplayInputs,
    world: World,
    mode: SessionMode,
    queued: BTreeMap<i64, Vec<i64>>,
    trace: Vec<TraceEntry>,
    log: SimLog,
    trigger: Option<Trigger>,
}

impl Run<'_> {
    fn recorded_ego(&self, frame: i64) -> Option<KinematicState<f64>> {
        self.inputs.ego_track().ok().and_then(|t| recorded_state(t, frame, 0.0))
    }

    fn ego_state(&self) -> Option<KinematicState<f64>> {
        self.world.agent(self.inputs.ego_id).filter(|a| a.active).map(|a| a.state)
    }

    /// Steps one recording frame, asking the policy before each substep.
    fn advance(&mut self, policy: &mut dyn EgoPolicy) -> Result<()> {
        let clock = self.world.clock.expect("session clock");
        let sim = &self.inputs.cfg.sim;
        for _ in 0..clock.substeps {
            if policy.model().is_none() {
                if let Some(state) = self.ego_state() {
                    let (frame, frac) = clock.at(self.world.step + 1);
                    let cmd = {
                        let obs = EgoObservation {
                            ego_id: self.inputs.ego_id,
                            frame,
                            frac,
                            dt: sim.dt,
                            state,
                            agents: &self.world.agents,
                            space: &self.world.space,
                        };
                        policy.command(&obs)
                    };
                    check_command(&cmd, policy.id(), frame)?;
                    self.world.set_command(self.inputs.ego_id, clamp_command(cmd, &self.inputs.params.car))?;
                }
            }
            self.world.step(sim)?;
        }
        Ok(())
    }

    fn record_frame(&mut self, frame: i64, d: Option<f64>) {
        self.trace.push(TraceEntry { frame, dissimilarity: d, mode: self.mode });
        self.log.push_frame(self.world.log_rows());
    }

    fn finish(mut self, policy: &dyn EgoPolicy, start_frame: i64, end_frame: i64, end: EndReason) -> ReplaySession {
        self.log.collisions = self.world.collisions.clone();
        let pet = log_pet(self.inputs, &self.log);
        ReplaySession {
            ego_id: self.inputs.ego_id,
            challenger_id: self.inputs.challenger_id(),
            policy_id: policy.id().to_string(),
            start_frame,
            end_frame,
            mode: self.mode,
            trigger: self.trigger,
            trace: self.trace,
            log: self.log,
            end,
            pet,
            variation: None,
            possible_false_positive: None,
        }
    }
}

fn window(inputs: &ReplayInputs) -> Result<(i64, i64)> {
    let ego = inputs.ego_track()?;
    let ego_first = ego.samples.first().map(|s| s.frame).ok_or_else(|| Error::NotFound("ego samples".into()))?;
    let (w0, w1) = inputs.scenario.core.frame_window;
    Ok((w0.max(ego_first), w1))
}

/// Replays the scenario around the policy-driven ego and switches the other
/// participants to agent mode at the first frame whose dissimilarity exceeds
/// the threshold.
pub fn run_adaptive(inputs: &ReplayInputs, policy: &mut dyn EgoPolicy) -> Result<ReplaySession> {
    inputs.validate()?;
    let (first, last) = window(inputs)?;
    let mut world = World::new(inputs.space.clone(), inputs.params.clone()).with_clock(inputs.clock(first)?);
    for t in inputs.scenario.participants.iter().filter(|t| t.track_id != inputs.ego_id) {
        world.add_replayed(Arc::new(t.clone()))?;
    }
    let start = recorded_state(inputs.ego_track()?, first, 0.0).expect("ego present at the first frame");
    add_ego(&mut world, inputs, policy, start, first)?;
    let mut run = Run {
        inputs,
        world,
        mode: SessionMode::Replay,
        queued: BTreeMap::new(),
        trace: Vec::new(),
        log: SimLog::new(1.0 / inputs.scenario.frame_rate),
        trigger: None,
    };
    let threshold = inputs.cfg.dissimilarity.threshold;
    for frame in first..=last {
        let recorded = run.recorded_ego(frame);
        if recorded.is_none() && run.mode == SessionMode::Replay {
            return Ok(run.finish(policy, first, frame - 1, EndReason::EgoTrackEnd));
        }
        let d = match (run.ego_state(), recorded) {
            (Some(e), Some(r)) => Some(dissimilarity(&e, &r, &inputs.cfg.dissimilarity)),
            _ => None,
        };
        if run.mode == SessionMode::Replay {
            if let Some(d) = d.filter(|d| *d > threshold) {
                run.trigger = Some(Trigger { frame, dissimilarity: d });
                run.mode = SessionMode::Agent;
                let mut queued = std::mem::take(&mut run.queued);
                switch_to_agents(&mut run.world, inputs, frame, &mut queued)?;
                run.queued = queued;
            }
        } else {
            spawn_queued(&mut run.world, inputs, frame, &run.queued)?;
        }
        run.record_frame(frame, d);
        if frame < last {
            run.advance(policy)?;
        }
    }
    Ok(run.finish(policy, first, last, EndReason::WindowEnd))
}

/// Pure replay of every participant, the ego included.
pub fn pure_replay(inputs: &ReplayInputs) -> Result<SimLog> {
    inputs.validate()?;
    let (first, last) = window(inputs)?;
    let mut world = World::new(inputs.space.clone(), inputs.params.clone()).with_clock(inputs.clock(first)?);
    for t in &inputs.scenario.participants {
        world.add_replayed(Arc::new(t.clone()))?;
    }
    let mut log = SimLog::new(1.0 / inputs.scenario.frame_rate);
    let n = world.clock.expect("clock").substeps;
    for frame in first..=last {
        log.push_frame(world.log_rows());
        if frame < last {
            for _ in 0..n {
                world.step(&inputs.cfg.sim)?;
            }
        }
    }
    Ok(log)
}

/// A set of `group.field` parameter overrides for a rewound run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variation {
    pub label: String,
    pub overrides: Vec<(String, f64)>,
}

impl Variation {
    pub fn none() -> Self {
        Self {
            label: "unchanged".into(),
            overrides: Vec::new(),
        }
    }

    /// Multiplies the named parameters of `base` by `factor`.
    pub fn scaled(label: impl Into<String>, base: &BehaviorParams, keys: &[&str], factor: f64) -> Result<Self> {
        let overrides = keys
            .iter()
            .map(|k| {
                base.get(k)
                    .map(|v| (k.to_string(), v * factor))
                    .ok_or_else(|| Error::Config(format!("unknown parameter `{k}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            label: label.into(),
            overrides,
        })
    }

    pub fn apply(&self, base: &BehaviorParams) -> Result<BehaviorParams> {
        let mut p = base.clone();
        for (k, v) in &self.overrides {
            p.set(k, *v)?;
        }
        p.validate()?;
        Ok(p)
    }
}

/// `n` variations drawn uniformly from the ranges of `spec`; variation `i`
/// uses its own stream of `seed`, so each is reproducible on its own.
pub fn sampled_variations(spec: &ParamSpec<f64>, n: usize, seed: u64) -> Vec<Variation> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Variation {
                label: format!("seed{seed}-{i}"),
                overrides: spec
                    .genes
                    .iter()
                    .map(|g| (g.name.clone(), g.lower + (g.upper - g.lower) * rng.gen::<f64>()))
                    .collect(),
            }
        })
        .collect()
}

/// Ranges for more aggressive driving of every vehicle kind: shorter accepted
/// gaps, higher desired speeds, quicker and harder acceleration.
pub fn aggressive_ranges(base: &BehaviorParams) -> ParamSpec<f64> {
    let mut genes = Vec::new();
    for group in ["car", "truck", "bicycle"] {
        let get = |f: &str| base.get(&format!("{group}.{f}")).expect("known field");
        let (gap, v0, tau, acc) = (get("yield_gap"), get("desired_speed"), get("relaxation_time"), get("max_accel"));
        genes.push((format!("{group}.yield_gap"), 0.5 * gap, gap));
        genes.push((format!("{group}.desired_speed"), v0, 1.3 * v0));
        genes.push((format!("{group}.relaxation_time"), 0.6 * tau, tau));
        genes.push((format!("{group}.max_accel"), acc, 1.3 * acc));
    }
    ParamSpec::new(genes).expect("non-empty ranges")
}

/// Reruns the interactive part of a triggered session from `rewind` seconds
/// before the trigger, once per variation (once unchanged when none are
/// given). Runs are independent and evaluated in parallel; results keep the
/// order of `variations`.
pub fn rewind_and_vary(
    inputs: &ReplayInputs,
    session: &ReplaySession,
    policy_factory: &(dyn Fn() -> Box<dyn EgoPolicy> + Sync),
    rewind: f64,
    variations: &[Variation],
) -> Result<Vec<ReplaySession>> {
    inputs.validate()?;
    let trigger = session
        .trigger
        .ok_or_else(|| Error::Config("rewind needs a session that reached agent mode".into()))?;
    if !(rewind >= 0.0 && rewind.is_finite()) {
        return Err(Error::Config("rewind must be a finite number of seconds >= 0".into()));
    }
    let mut start = trigger.frame - (rewind * inputs.scenario.frame_rate).round() as i64;
    if start < session.start_frame {
        log::warn!(
            "rewind of {rewind} s reaches before the scenario start; starting at frame {}",
            session.start_frame
        );
        start = session.start_frame;
    }
    let ego_row = session
        .log
        .frames
        .iter()
        .flatten()
        .find(|r| r.frame == start && r.agent_id == session.ego_id)
        .ok_or_else(|| Error::NotFound(format!("ego state at frame {start}")))?;
    let ego_state = KinematicState {
        position: ego_row.position(),
        heading: ego_row.heading,
        speed: ego_row.v,
        steer: ego_row.delta,
    };
    let unchanged = [Variation::none()];
    let variations = if variations.is_empty() { &unchanged[..] } else { variations };
    variations
        .par_iter()
        .map(|v| {
            let mut varied = inputs.clone();
            varied.params = v.apply(&inputs.params)?;
            let mut policy = policy_factory();
            let mut s = run_from(&varied, policy.as_mut(), start, ego_state)?;
            s.variation = Some(v.label.clone());
            Ok(s)
        })
        .collect()
}

/// Agent-mode run from `start` with the ego at `ego_state`.
fn run_from(inputs: &ReplayInputs, policy: &mut dyn EgoPolicy, start: i64, ego_state: KinematicState<f64>) -> Result<ReplaySession> {
    let (_, last) = window(inputs)?;
    let mut world = World::new(inputs.space.clone(), inputs.params.clone()).with_clock(inputs.clock(start)?);
    add_ego(&mut world, inputs, policy, ego_state, start)?;
    let mut queued = BTreeMap::new();
    switch_to_agents(&mut world, inputs, start, &mut queued)?;
    let mut run = Run {
        inputs,
        world,
        mode: SessionMode::Agent,
        queued,
        trace: Vec::new(),
        log: SimLog::new(1.0 / inputs.scenario.frame_rate),
        trigger: None,
    };
    for frame in start..=last {
        if frame > start {
            spawn_queued(&mut run.world, inputs, frame, &run.queued)?;
        }
        let d = match (run.ego_state(), run.recorded_ego(frame)) {
            (Some(e), Some(r)) => Some(dissimilarity(&e, &r, &inputs.cfg.dissimilarity)),
            _ => None,
        };
        if frame == start {
            run.trigger = Some(Trigger {
                frame,
                dissimilarity: d.unwrap_or(0.0),
            });
        }
        run.record_frame(frame, d);
        if frame < last {
            run.advance(policy)?;
        }
    }
    Ok(run.finish(policy, start, last, EndReason::WindowEnd))
}

/// Reruns a triggered session unchanged with interactive agents. When the
/// recorded scenario was critical but the rerun no longer is, the session is
/// marked as a possible false positive.
pub fn audit_false_positive(
    inputs: &ReplayInputs,
    session: &mut ReplaySession,
    policy_factory: &(dyn Fn() -> Box<dyn EgoPolicy> + Sync),
    rewind: f64,
    critical_pet: f64,
) -> Result<ReplaySession> {
    let rerun = rewind_and_vary(inputs, session, policy_factory, rewind, &[])?
        .pop()
        .expect("one run");
    let recorded_critical = inputs.scenario.core.pet.pet.is_some_and(|p| p <= critical_pet);
    let rerun_critical = rerun.pet.is_some_and(|p| p <= critical_pet);
    session.possible_false_positive = Some(recorded_critical && !rerun_critical);
    Ok(rerun)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec2d;

    fn st(x: f64, y: f64, h: f64, v: f64) -> KinematicState<f64> {
        KinematicState::new(Vec2d::new(x, y), h, v)
    }

    #[test]
    fn identical_states_are_not_dissimilar() {
        let cfg = DissimilarityConfig {
            heading_weight: 1.0,
            speed_weight: 1.0,
            ..Default::default()
        };
        let s = st(1.0, 2.0, 0.3, 4.0);
        assert_eq!(dissimilarity(&s, &s, &cfg), 0.0);
    }

    #[test]
    fn pure_lateral_offset_is_its_length() {
        let cfg = DissimilarityConfig::default();
        assert_eq!(dissimilarity(&st(0.0, 2.0, 0.0, 5.0), &st(0.0, 0.0, 0.0, 5.0), &cfg), 2.0);
    }

    #[test]
    fn heading_difference_wraps() {
        let cfg = DissimilarityConfig {
            position_weight: 0.0,
            heading_weight: 1.0,
            ..Default::default()
        };
        let d = dissimilarity(&st(0.0, 0.0, 3.1, 0.0), &st(0.0, 0.0, -3.1, 0.0), &cfg);
        assert!((d - (2.0 * std::f64::consts::PI - 6.2)).abs() < 1e-12);
    }

    #[test]
    fn config_rejects_zero_weights_and_threshold() {
        let mut cfg = DissimilarityConfig {
            position_weight: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.position_weight = 1.0;
        cfg.threshold = 0.0;
        assert!(cfg.validate().is_err());
    }
}
