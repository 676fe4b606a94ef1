//! Intersecting-scenario extraction.
//!
//! Every car is treated as a potential ego. Agents that enter its moving
//! circular region of interest become candidates; a candidate pair is kept
//! when the buffered paths overlap and the post-encroachment time is at or
//! below the relevance threshold. Kept pairs are cut to a shorter window and
//! extended with every agent that came near either core vehicle.

pub mod conflict;
pub mod functional;
pub mod pet;
pub mod roi;
pub mod stats;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::maneuvers::{LabelTable, ManeuverType};
use crate::trajdata::{AgentKind, Recording, Track};
use crate::Vec2d;

pub use conflict::{find_conflict_area, find_conflict_areas, ConflictArea};
pub use functional::{classify_functional_type, CoreAgentInfo, FunctionalType, ScenarioCategory, Taxonomy};
pub use pet::{compute_pet, PetResult};
pub use roi::roi_neighbors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub roi_radius: f64,
    pub pet_threshold: f64,
    pub critical_pet: f64,
    pub pedestrian_radius: f64,
    pub lead_margin: f64,
    pub tail_margin: f64,
    /// Minimum spacing of path vertices used for conflict areas [m].
    pub path_spacing: f64,
    /// Keep pairs without a measurable PET (no conflict area).
    pub keep_unmeasured: bool,
    pub taxonomy: Taxonomy,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            roi_radius: 15.0,
            pet_threshold: 6.5,
            critical_pet: 1.5,
            pedestrian_radius: 0.3,
            lead_margin: 1.0,
            tail_margin: 1.0,
            path_spacing: 0.5,
            keep_unmeasured: false,
            taxonomy: Taxonomy::default(),
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let pos = |v: f64, k: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(crate::Error::Config(format!("extraction.{k} must be > 0")))
            }
        };
        pos(self.roi_radius, "roi_radius")?;
        pos(self.pedestrian_radius, "pedestrian_radius")?;
        pos(self.path_spacing, "path_spacing")?;
        if !(self.pet_threshold >= 0.0) || !(self.critical_pet >= 0.0) {
            return Err(crate::Error::Config("extraction.pet_threshold must be >= 0".into()));
        }
        if !(self.lead_margin >= 0.0 && self.tail_margin >= 0.0) {
            return Err(crate::Error::Config("extraction margins must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectingScenario {
    pub ego_track_id: i64,
    pub challenger_track_id: i64,
    pub category: ScenarioCategory,
    pub functional_type: FunctionalType,
    pub pet: PetResult,
    /// Inclusive frame range.
    pub frame_window: (i64, i64),
    /// PET at or below the critical threshold.
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteScenario {
    pub core: IntersectingScenario,
    /// Core agents first (ego, challenger), then bystanders by id; clipped to the window.
    pub participants: Vec<Track>,
    pub recording_id: i64,
    pub traffic_space_id: String,
    pub frame_rate: f64,
}

impl ConcreteScenario {
    pub fn participant(&self, id: i64) -> Option<&Track> {
        self.participants.iter().find(|t| t.track_id == id)
    }
}

/// Audit entry for one ego/challenger pair that met inside the ROI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub ego_track_id: i64,
    pub challenger_track_id: i64,
    pub category: ScenarioCategory,
    pub functional_type: FunctionalType,
    pub has_conflict_area: bool,
    pub pet: Option<f64>,
    pub retained: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ExtractionOutput {
    pub scenarios: Vec<ConcreteScenario>,
    pub candidates: Vec<Candidate>,
}

/// Half-width used to buffer an agent's path.
pub fn buffer_half_width(track: &Track, pedestrian_radius: f64) -> f64 {
    if track.kind == AgentKind::Pedestrian || track.width <= 0.0 {
        pedestrian_radius
    } else {
        0.5 * track.width
    }
}

/// Thinned path; a stationary agent gets a millimeter stub along its heading.
pub fn conflict_path(track: &Track, spacing: f64) -> Vec<Vec2d> {
    let pts: Vec<Vec2d> = track.samples.iter().map(|s| s.position).collect();
    let mut thin = conflict::thin_path(&pts, spacing);
    if thin.len() < 2 {
        if let Some(s) = track.samples.first() {
            thin = vec![s.position, s.position + Vec2d::from_angle(s.heading) * 1e-3];
        }
    }
    thin
}

/// Sets the frame window from first ROI contact to the last conflict-area
/// occupancy, padded by the margins and clamped to both lifetimes.
pub fn tailor_scenario(
    mut scn: IntersectingScenario,
    a: &Track,
    b: &Track,
    frame_rate: f64,
    roi_radius: f64,
    lead_margin: f64,
    tail_margin: f64,
) -> IntersectingScenario {
    let lo_life = a.initial_frame.max(b.initial_frame);
    let hi_life = a.final_frame.min(b.final_frame);
    let lead = (lead_margin * frame_rate).round() as i64;
    let tail = (tail_margin * frame_rate).round() as i64;
    let contact = roi::first_contact(a, b, roi_radius).unwrap_or(lo_life);
    let last_occupancy = match (scn.pet.first_interval, scn.pet.second_interval) {
        (Some(x), Some(y)) => Some((x.1.max(y.1) * frame_rate - 1e-9).ceil() as i64),
        _ => None,
    };
    let end = last_occupancy.unwrap_or_else(|| {
        // no conflict area: last frame the pair is in contact
        (lo_life..=hi_life)
            .rev()
            .find(|&f| roi::in_contact_during(a, b, roi_radius, f, f))
            .unwrap_or(hi_life)
    });
    let start = (contact - lead).max(lo_life);
    let end = (end + tail).min(hi_life).max(start);
    scn.frame_window = (start, end);
    scn
}

/// Core pair plus every agent that comes within `radius` of a core vehicle
/// during the window.
pub fn compose_complex_scenario(core: IntersectingScenario, recording: &Recording, radius: f64) -> ConcreteScenario {
    let (start, end) = core.frame_window;
    let ego = recording.track(core.ego_track_id).expect("ego in recording");
    let challenger = recording.track(core.challenger_track_id).expect("challenger in recording");
    let core_vehicles: Vec<&Track> = [ego, challenger]
        .into_iter()
        .filter(|t| t.kind.is_motor_vehicle())
        .collect();

    let mut participants = Vec::new();
    participants.extend(ego.clipped(start, end));
    participants.extend(challenger.clipped(start, end));
    let mut others: Vec<&Track> = recording
        .tracks
        .iter()
        .filter(|t| t.track_id != ego.track_id && t.track_id != challenger.track_id)
        .collect();
    others.sort_by_key(|t| t.track_id);
    for o in others {
        if core_vehicles
            .iter()
            .any(|v| roi::in_contact_during(v, o, radius, start, end))
        {
            participants.extend(o.clipped(start, end));
        }
    }
    ConcreteScenario {
        core,
        participants,
        recording_id: recording.recording_id,
        traffic_space_id: recording.traffic_space_id.clone(),
        frame_rate: recording.frame_rate,
    }
}

fn core_info(labels: &LabelTable, id: i64) -> CoreAgentInfo {
    match labels.get(id) {
        Some(l) => CoreAgentInfo {
            label: l.label,
            maneuver: l.maneuver,
        },
        None => CoreAgentInfo {
            label: None,
            maneuver: ManeuverType::Invalid,
        },
    }
}

/// Full extraction over a preprocessed, labeled recording. Output is ordered
/// by `(ego, challenger)` id; car-car pairs appear once, with the smaller id
/// as ego.
pub fn extract_all(recording: &Recording, labels: &LabelTable, cfg: &ExtractionConfig) -> ExtractionOutput {
    let mut tracks: Vec<&Track> = recording.tracks.iter().collect();
    tracks.sort_by_key(|t| t.track_id);
    let paths: HashMap<i64, Vec<Vec2d>> = tracks
        .iter()
        .map(|t| (t.track_id, conflict_path(t, cfg.path_spacing)))
        .collect();
    let egos: Vec<&Track> = tracks.iter().copied().filter(|t| t.kind == AgentKind::Car).collect();

    let per_ego: Vec<Vec<(Candidate, Option<ConcreteScenario>)>> = egos
        .par_iter()
        .map(|ego| {
            let mut out = Vec::new();
            for other in &tracks {
                if other.track_id == ego.track_id {
                    continue;
                }
                if other.kind == AgentKind::Car && other.track_id < ego.track_id {
                    continue;
                }
                let Some(category) = ScenarioCategory::of(ego.kind, other.kind) else {
                    continue;
                };
                if roi::first_contact(ego, other, cfg.roi_radius).is_none() {
                    continue;
                }
                let areas = find_conflict_areas(
                    &paths[&ego.track_id],
                    buffer_half_width(ego, cfg.pedestrian_radius),
                    &paths[&other.track_id],
                    buffer_half_width(other, cfg.pedestrian_radius),
                )
                .unwrap_or_default();
                let has_area = !areas.is_empty();
                let pet = compute_pet(ego, other, &areas, recording.frame_rate, cfg.pedestrian_radius);
                let functional_type = classify_functional_type(
                    category,
                    core_info(labels, ego.track_id),
                    core_info(labels, other.track_id),
                    has_area,
                    &cfg.taxonomy,
                );
                let retained = match pet.pet {
                    Some(p) => p <= cfg.pet_threshold,
                    None => cfg.keep_unmeasured,
                };
                let candidate = Candidate {
                    ego_track_id: ego.track_id,
                    challenger_track_id: other.track_id,
                    category,
                    functional_type: functional_type.clone(),
                    has_conflict_area: has_area,
                    pet: pet.pet,
                    retained,
                };
                let scenario = retained.then(|| {
                    let critical = pet.pet.map_or(false, |p| p <= cfg.critical_pet);
                    let scn = IntersectingScenario {
                        ego_track_id: ego.track_id,
                        challenger_track_id: other.track_id,
                        category,
                        functional_type,
                        pet,
                        frame_window: (0, 0),
                        critical,
                    };
                    let scn = tailor_scenario(scn, ego, other, recording.frame_rate, cfg.roi_radius, cfg.lead_margin, cfg.tail_margin);
                    compose_complex_scenario(scn, recording, cfg.roi_radius)
                });
                out.push((candidate, scenario));
            }
            out
        })
        .collect();

    let mut output = ExtractionOutput::default();
    for (c, s) in per_ego.into_iter().flatten() {
        output.candidates.push(c);
        output.scenarios.extend(s);
    }
    output
}
