//! Rule-based removal of implausible tracks.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajdata::{speed, AgentKind, Recording};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRules {
    pub max_speed_by_kind: BTreeMap<AgentKind, f64>,
    pub min_lifetime_frames_by_kind: BTreeMap<AgentKind, u32>,
    pub min_path_length: f64,
}

impl FilterRules {
    /// Defaults at a given frame rate: 2 s lifetime for motor vehicles, 1 s for VRUs.
    pub fn defaults(frame_rate: f64) -> Self {
        let secs = |s: f64| (s * frame_rate).round().max(1.0) as u32;
        let mut max_speed = BTreeMap::new();
        let mut min_life = BTreeMap::new();
        for k in AgentKind::ALL {
            let (v, life) = match k {
                AgentKind::Pedestrian => (4.0, secs(1.0)),
                AgentKind::Bicycle => (12.0, secs(1.0)),
                _ => (30.0, secs(2.0)),
            };
            max_speed.insert(k, v);
            min_life.insert(k, life);
        }
        Self {
            max_speed_by_kind: max_speed,
            min_lifetime_frames_by_kind: min_life,
            min_path_length: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for k in AgentKind::ALL {
            match self.max_speed_by_kind.get(&k) {
                Some(v) if *v > 0.0 => {}
                _ => return Err(Error::Config(format!("filter.max_speed.{k} must be > 0"))),
            }
            match self.min_lifetime_frames_by_kind.get(&k) {
                Some(v) if *v > 0 => {}
                _ => return Err(Error::Config(format!("filter.min_lifetime_frames.{k} must be > 0"))),
            }
        }
        if !(self.min_path_length > 0.0) {
            return Err(Error::Config("filter.min_path_length must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    MaxSpeed,
    MinLifetime,
    MinPathLength,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::MaxSpeed => "max_speed",
            Rule::MinLifetime => "min_lifetime",
            Rule::MinPathLength => "min_path_length",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Removal {
    pub track_id: i64,
    pub rule: Rule,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterReport {
    pub kept: Vec<i64>,
    pub removed: Vec<Removal>,
}

impl FilterReport {
    pub fn write_csv<W: Write>(&self, out: W, header_comment: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(c) = header_comment {
            writeln!(out, "# {c}").map_err(|e| Error::io("filter report", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["track_id", "status", "rule", "value"])?;
        let mut rows: Vec<(i64, String, String, String)> = self
            .kept
            .iter()
            .map(|id| (*id, "kept".into(), String::new(), String::new()))
            .collect();
        rows.extend(
            self.removed
                .iter()
                .map(|r| (r.track_id, "removed".into(), r.rule.to_string(), r.value.to_string())),
        );
        rows.sort_by_key(|r| r.0);
        for (id, status, rule, value) in rows {
            w.write_record([id.to_string(), status, rule, value])?;
        }
        w.flush().map_err(|e| Error::io("filter report", e))?;
        Ok(())
    }
}

/// First violated rule for a track, checked in a fixed order
/// (speed, lifetime, path length).
fn first_violation(track: &crate::trajdata::Track, rules: &FilterRules) -> Option<(Rule, f64)> {
    let max_speed = track.samples.iter().map(speed).fold(0.0, f64::max);
    let limit = rules.max_speed_by_kind.get(&track.kind).copied().unwrap_or(f64::INFINITY);
    if max_speed > limit {
        return Some((Rule::MaxSpeed, max_speed));
    }
    let frames = track.samples.len() as u32;
    let min_frames = rules.min_lifetime_frames_by_kind.get(&track.kind).copied().unwrap_or(0);
    if frames < min_frames {
        return Some((Rule::MinLifetime, frames as f64));
    }
    let len = track.path_length();
    if len < rules.min_path_length {
        return Some((Rule::MinPathLength, len));
    }
    None
}

/// Splits the recording into plausible and implausible tracks.
pub fn filter_tracks(recording: &Recording, rules: &FilterRules) -> (Recording, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept_tracks = Vec::new();
    for t in &recording.tracks {
        match first_violation(t, rules) {
            None => {
                report.kept.push(t.track_id);
                kept_tracks.push(t.clone());
            }
            Some((rule, value)) => report.removed.push(Removal {
                track_id: t.track_id,
                rule,
                value,
            }),
        }
    }
    (
        Recording {
            tracks: kept_tracks,
            ..recording.clone()
        },
        report,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::{Track, TrackSample};
    use crate::Vec2d;

    fn straight(id: i64, kind: AgentKind, speed: f64, frames: usize, rate: f64) -> Track {
        let samples = (0..frames)
            .map(|i| TrackSample {
                frame: i as i64,
                position: Vec2d::new(speed * i as f64 / rate, 0.0),
                heading: 0.0,
                velocity: Vec2d::new(speed, 0.0),
                acceleration: Vec2d::zero(),
            })
            .collect();
        Track::new(id, kind, 0.0, 0.0, samples)
    }

    #[test]
    fn pedestrian_anomaly_removed() {
        // 8 m/s for about 2 s: a tracking glitch near the intersection center
        let rec = Recording {
            recording_id: 17,
            frame_rate: 25.0,
            traffic_space_id: String::new(),
            tracks: vec![straight(60, AgentKind::Pedestrian, 8.0, 50, 25.0), straight(61, AgentKind::Pedestrian, 1.3, 200, 25.0)],
        };
        let (out, report) = filter_tracks(&rec, &FilterRules::defaults(25.0));
        assert_eq!(report.kept, vec![61]);
        assert_eq!(report.removed.len(), 1);
        assert_eq!(report.removed[0].track_id, 60);
        assert_eq!(report.removed[0].rule, Rule::MaxSpeed);
        assert_eq!(out.tracks.len(), 1);
    }

    #[test]
    fn empty_recording_passes_through() {
        let rec = Recording {
            recording_id: 1,
            frame_rate: 25.0,
            traffic_space_id: "x".into(),
            tracks: vec![],
        };
        let (out, report) = filter_tracks(&rec, &FilterRules::defaults(25.0));
        assert_eq!(out, rec);
        assert_eq!(report, FilterReport::default());
    }

    #[test]
    fn defaults_validate() {
        let r = FilterRules::defaults(25.0);
        r.validate().unwrap();
        assert_eq!(r.min_lifetime_frames_by_kind[&AgentKind::Car], 50);
        assert_eq!(r.min_lifetime_frames_by_kind[&AgentKind::Pedestrian], 25);
        let mut bad = r.clone();
        bad.min_path_length = 0.0;
        assert!(bad.validate().is_err());
    }
}
