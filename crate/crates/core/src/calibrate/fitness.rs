//! Trajectory fitness: how far simulated agents drift from their recordings.
//!
//! Every scored track enters the simulation at its first recorded frame with
//! its recorded state and follows the route toward its labeled exit (pedestrians
//! walk toward their recorded final position). Tracks that cannot be routed are
//! replayed as recorded so the others still interact with them, and are
//! reported as excluded.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maneuvers::LabelTable;
use crate::simcore::{seed_from_track, BehaviorParams, LogRow, ReplayClock, SimConfig, SimLog, World};
use crate::trajdata::{AgentKind, Recording, TrackSample, TrafficSpace};

/// Per-frame discrepancy between a simulated and a recorded agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Euclidean position error [m].
    Position,
    /// Absolute speed error [m/s].
    Speed,
}

impl Metric {
    pub fn error(self, recorded: &TrackSample, simulated: &LogRow) -> f64 {
        match self {
            Metric::Position => recorded.position.dist(simulated.position()),
            Metric::Speed => (recorded.velocity.norm() - simulated.v).abs(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(Metric::Position),
            "speed" => Ok(Metric::Speed),
            _ => Err(Error::Config(format!("unknown fitness metric `{s}` (position or speed)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessConfig {
    pub sim: SimConfig,
    pub metric: Metric,
    /// Penalty per collision involving a simulated agent [m].
    pub collision_weight: f64,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            metric: Metric::Position,
            collision_weight: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub fitness: f64,
    /// Mean over agents of each agent's mean error at matched frames.
    pub mean_error: f64,
    /// Matched (agent, frame) pairs.
    pub matched: usize,
    pub collisions: usize,
    pub scored: Vec<i64>,
    pub excluded: Vec<i64>,
}

impl FitnessReport {
    pub fn excluded_fraction(&self) -> f64 {
        let n = self.scored.len() + self.excluded.len();
        if n == 0 {
            0.0
        } else {
            self.excluded.len() as f64 / n as f64
        }
    }
}

/// Simulation steps per recording frame; the step must divide the frame period.
pub fn substeps(frame_rate: f64, dt: f64) -> Result<usize> {
    let n = 1.0 / (frame_rate * dt);
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "sim.dt = {dt} must divide the frame period 1/{frame_rate}"
        )));
    }
    Ok(r as usize)
}

/// Splits tracks into those that can be simulated and those that must be replayed.
pub fn routable_tracks(recording: &Recording, labels: &LabelTable, space: &TrafficSpace) -> (Vec<i64>, Vec<i64>) {
    let mut scored = Vec::new();
    let mut excluded = Vec::new();
    for t in &recording.tracks {
        let ok = match t.kind {
            AgentKind::Pedestrian => t.samples.len() >= 2,
            _ => {
                let labeled = labels.get(t.track_id).is_some_and(|l| l.label.is_some() && l.maneuver.is_regular());
                let on_lane = t
                    .samples
                    .first()
                    .is_some_and(|s| space.nearest_lane(s.position, s.heading, 3.0).is_some());
                labeled && on_lane
            }
        };
        if ok {
            scored.push(t.track_id);
        } else {
            excluded.push(t.track_id);
        }
    }
    scored.sort_unstable();
    excluded.sort_unstable();
    (scored, excluded)
}

/// Re-enacts the recording with the given parameters and logs every recording frame.
pub fn simulate_recording(
    params: &BehaviorParams,
    recording: &Recording,
    labels: &LabelTable,
    space: &Arc<TrafficSpace>,
    sim: &SimConfig,
) -> Result<(SimLog, Vec<i64>, Vec<i64>)> {
    sim.validate()?;
    params.validate()?;
    let n = substeps(recording.frame_rate, sim.dt)?;
    let (scored, excluded) = routable_tracks(recording, labels, space);
    let first = recording.tracks.iter().filter_map(|t| t.samples.first()).map(|s| s.frame).min();
    let last = recording.tracks.iter().filter_map(|t| t.samples.last()).map(|s| s.frame).max();
    let mut log = SimLog::new(1.0 / recording.frame_rate);
    let (Some(first), Some(last)) = (first, last) else {
        return Ok((log, scored, excluded));
    };
    let clock = ReplayClock {
        frame0: first,
        frame_rate: recording.frame_rate,
        substeps: n,
    };
    let mut world = World::new(space.clone(), params.clone()).with_clock(clock);
    for id in &excluded {
        let t = recording.track(*id).expect("listed track");
        world.add_replayed(Arc::new(t.clone()))?;
    }
    let mut starts: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for id in &scored {
        let t = recording.track(*id).expect("listed track");
        starts.entry(t.samples[0].frame).or_default().push(*id);
    }
    for frame in first..=last {
        for id in starts.get(&frame).into_iter().flatten() {
            let t = recording.track(*id).expect("listed track");
            let exit = labels.get(*id).and_then(|l| l.label).map(|l| l.exit);
            seed_from_track(&mut world, t, frame, exit, None)?;
        }
        log.push_frame(world.log_rows());
        if frame < last {
            for _ in 0..n {
                world.step(sim)?;
            }
        }
    }
    log.collisions = world.collisions.clone();
    Ok((log, scored, excluded))
}

/// Outcome of comparing a log with its recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogScore {
    pub fitness: f64,
    pub mean_error: f64,
    pub matched: usize,
    pub collisions: usize,
}

/// Scores a log against the recording for the given agents. Agents without
/// any matched frame do not enter the mean.
pub fn score_log(recording: &Recording, log: &SimLog, scored: &[i64], metric: Metric, collision_weight: f64) -> LogScore {
    let ids: BTreeSet<i64> = scored.iter().copied().collect();
    let mut per_agent: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for row in log.rows().filter(|r| ids.contains(&r.agent_id)) {
        let Some(s) = recording.track(row.agent_id).and_then(|t| t.sample_at(row.frame)) else {
            continue;
        };
        let e = per_agent.entry(row.agent_id).or_default();
        e.0 += metric.error(s, row);
        e.1 += 1;
    }
    let collisions = log
        .collisions
        .iter()
        .filter(|c| ids.contains(&c.a) || ids.contains(&c.b))
        .count();
    let matched = per_agent.values().map(|e| e.1).sum();
    let mean_error = if per_agent.is_empty() {
        0.0
    } else {
        per_agent.values().map(|(sum, n)| sum / *n as f64).sum::<f64>() / per_agent.len() as f64
    };
    LogScore {
        fitness: mean_error + collision_weight * collisions as f64,
        mean_error,
        matched,
        collisions,
    }
}

pub fn trajectory_fitness(
    params: &BehaviorParams,
    recording: &Recording,
    labels: &LabelTable,
    space: &Arc<TrafficSpace>,
    cfg: &FitnessConfig,
) -> Result<FitnessReport> {
    let (log, scored, excluded) = simulate_recording(params, recording, labels, space, &cfg.sim)?;
    let sc = score_log(recording, &log, &scored, cfg.metric, cfg.collision_weight);
    Ok(FitnessReport {
        fitness: sc.fitness,
        mean_error: sc.mean_error,
        matched: sc.matched,
        collisions: sc.collisions,
        scored,
        excluded,
    })
}
