//! Branch labels and maneuver types from fixed reference points.
//!
//! Each track endpoint is assigned to its nearest reference point. Because
//! the centroids never move, one assignment pass is the whole clustering.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::num::wrap_angle;
use crate::trajdata::{Compass, Recording, Track, TrafficSpace};
use crate::Vec2d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchLabel {
    pub entry: Compass,
    pub exit: Compass,
}

impl BranchLabel {
    pub fn new(entry: Compass, exit: Compass) -> Self {
        Self { entry, exit }
    }
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.entry, self.exit)
    }
}

impl FromStr for BranchLabel {
    type Err = Error;

    /// Parses labels such as `SN`, `NEW`, `SWNE`.
    fn from_str(s: &str) -> Result<Self> {
        for split in 1..s.len() {
            if let (Ok(a), Ok(b)) = (s[..split].parse::<Compass>(), s[split..].parse::<Compass>()) {
                return Ok(Self::new(a, b));
            }
        }
        Err(Error::Config(format!("invalid branch label `{s}`")))
    }
}

impl Serialize for BranchLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BranchLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverType {
    Through,
    Left,
    Right,
    UTurn,
    Special,
    Invalid,
}

impl ManeuverType {
    pub fn as_str(self) -> &'static str {
        match self {
            ManeuverType::Through => "through",
            ManeuverType::Left => "left",
            ManeuverType::Right => "right",
            ManeuverType::UTurn => "u_turn",
            ManeuverType::Special => "special",
            ManeuverType::Invalid => "invalid",
        }
    }

    /// Through, left, right or u-turn.
    pub fn is_regular(self) -> bool {
        matches!(self, ManeuverType::Through | ManeuverType::Left | ManeuverType::Right | ManeuverType::UTurn)
    }
}

impl fmt::Display for ManeuverType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManeuverType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "through" => ManeuverType::Through,
            "left" => ManeuverType::Left,
            "right" => ManeuverType::Right,
            "u_turn" => ManeuverType::UTurn,
            "special" => ManeuverType::Special,
            "invalid" => ManeuverType::Invalid,
            _ => return Err(Error::Config(format!("unknown maneuver type `{s}`"))),
        })
    }
}

/// Maneuver implied by entering at `entry` and leaving at `exit` under
/// right-hand traffic: the signed angle between the inbound heading
/// (pointing away from the entry branch) and the outbound heading.
pub fn turn_maneuver(entry: Compass, exit: Compass) -> ManeuverType {
    if entry == exit {
        return ManeuverType::Special;
    }
    let inbound = entry.bearing() + std::f64::consts::PI;
    let turn = wrap_angle(exit.bearing() - inbound).to_degrees();
    if turn.abs() <= 45.0 {
        ManeuverType::Through
    } else if turn.abs() > 135.0 + 1e-9 {
        ManeuverType::UTurn
    } else if turn > 0.0 {
        ManeuverType::Left
    } else {
        ManeuverType::Right
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingConfig {
    pub endpoint_window: usize,
    pub max_assign_distance: f64,
    pub label_to_maneuver: BTreeMap<BranchLabel, ManeuverType>,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            endpoint_window: 5,
            max_assign_distance: 10.0,
            label_to_maneuver: default_maneuver_table(),
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint_window < 1 {
            return Err(Error::Config("labeling.endpoint_window must be >= 1".into()));
        }
        if !(self.max_assign_distance > 0.0) {
            return Err(Error::Config("labeling.max_assign_distance must be > 0".into()));
        }
        Ok(())
    }
}

/// Right-hand-traffic table over all compass pairs with distinct branches.
pub fn default_maneuver_table() -> BTreeMap<BranchLabel, ManeuverType> {
    use Compass::*;
    let all = [N, NE, E, SE, S, SW, W, NW];
    let mut t = BTreeMap::new();
    for a in all {
        for b in all {
            if a != b {
                t.insert(BranchLabel::new(a, b), turn_maneuver(a, b));
            }
        }
    }
    t
}

fn mean_position(points: impl Iterator<Item = Vec2d>) -> Vec2d {
    let mut n = 0usize;
    let mut acc = Vec2d::zero();
    for p in points {
        acc += p;
        n += 1;
    }
    acc / n.max(1) as f64
}

/// Nearest reference point for `kind` to `p`; ties go to the smallest label.
fn nearest_reference(space: &TrafficSpace, track: &Track, p: Vec2d) -> Option<(Compass, f64)> {
    let mut best: Option<(Compass, f64)> = None;
    for r in space.reference_points_for(track.kind) {
        let d = r.position.dist(p);
        best = match best {
            None => Some((r.label, d)),
            Some((l, bd)) if d < bd || (d == bd && r.label.as_str() < l.as_str()) => Some((r.label, d)),
            b => b,
        };
    }
    best
}

/// Entry and exit labels, or `Ok(None)` when an endpoint is too far from
/// every reference point.
pub fn assign_branch_label(track: &Track, space: &TrafficSpace, cfg: &LabelingConfig) -> Result<Option<BranchLabel>> {
    if space.reference_points_for(track.kind).next().is_none() {
        return Err(Error::Config(format!(
            "traffic space `{}` has no reference points for {}",
            space.id, track.kind
        )));
    }
    if track.samples.is_empty() {
        return Ok(None);
    }
    let w = cfg.endpoint_window.min(track.samples.len()).max(1);
    let head = mean_position(track.samples[..w].iter().map(|s| s.position));
    let tail = mean_position(track.samples[track.samples.len() - w..].iter().map(|s| s.position));
    let (entry, de) = nearest_reference(space, track, head).unwrap();
    let (exit, dx) = nearest_reference(space, track, tail).unwrap();
    if de > cfg.max_assign_distance || dx > cfg.max_assign_distance {
        return Ok(None);
    }
    Ok(Some(BranchLabel::new(entry, exit)))
}

/// Table lookup; same-branch and unknown labels are `special`.
pub fn classify_maneuver(label: BranchLabel, cfg: &LabelingConfig) -> ManeuverType {
    if label.entry == label.exit {
        return ManeuverType::Special;
    }
    cfg.label_to_maneuver.get(&label).copied().unwrap_or(ManeuverType::Special)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackLabel {
    pub track_id: i64,
    pub label: Option<BranchLabel>,
    pub maneuver: ManeuverType,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelTable {
    pub rows: Vec<TrackLabel>,
    pub label_counts: BTreeMap<String, usize>,
    pub maneuver_counts: BTreeMap<ManeuverType, usize>,
}

impl LabelTable {
    pub fn get(&self, track_id: i64) -> Option<&TrackLabel> {
        self.rows
            .binary_search_by_key(&track_id, |r| r.track_id)
            .ok()
            .map(|i| &self.rows[i])
    }

    /// Tracks that did not receive a through/left/right/u-turn maneuver.
    pub fn irregular(&self) -> impl Iterator<Item = &TrackLabel> {
        self.rows.iter().filter(|r| !r.maneuver.is_regular())
    }

    pub fn write_csv<W: Write>(&self, out: W, header_comment: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(c) = header_comment {
            writeln!(out, "# {c}").map_err(|e| Error::io("label table", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["track_id", "label", "maneuver"])?;
        for r in &self.rows {
            w.write_record([
                r.track_id.to_string(),
                r.label.map(|l| l.to_string()).unwrap_or_default(),
                r.maneuver.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("label table", e))?;
        Ok(())
    }
}

/// Labels every track of the recording, sorted by track id.
pub fn label_recording(recording: &Recording, space: &TrafficSpace, cfg: &LabelingConfig) -> Result<LabelTable> {
    let mut table = LabelTable::default();
    let mut tracks: Vec<&Track> = recording.tracks.iter().collect();
    tracks.sort_by_key(|t| t.track_id);
    for t in tracks {
        let label = assign_branch_label(t, space, cfg)?;
        let maneuver = label.map_or(ManeuverType::Invalid, |l| classify_maneuver(l, cfg));
        *table
            .label_counts
            .entry(label.map_or_else(|| "-".to_string(), |l| l.to_string()))
            .or_default() += 1;
        *table.maneuver_counts.entry(maneuver).or_default() += 1;
        table.rows.push(TrackLabel {
            track_id: t.track_id,
            label,
            maneuver,
        });
    }
    Ok(table)
}
