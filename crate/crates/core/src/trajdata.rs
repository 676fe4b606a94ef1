//! Trajectory recordings and intersection maps.
//!
//! A recording arrives as three CSV files (recording meta, track meta and
//! per-frame samples) plus a column map that names the source header for
//! each canonical field. Everything is converted to meters, seconds and
//! radians on load.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{segment_intersection, ConvexPolygon, Polyline, Vec2};
use crate::num::wrap_angle;
use crate::Vec2d;

/// Default recording rate when the meta file has no frame rate column.
pub const DEFAULT_FRAME_RATE: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Car,
    Truck,
    Bus,
    Pedestrian,
    Bicycle,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Car,
        AgentKind::Truck,
        AgentKind::Bus,
        AgentKind::Pedestrian,
        AgentKind::Bicycle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Car => "car",
            AgentKind::Truck => "truck",
            AgentKind::Bus => "bus",
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Bicycle => "bicycle",
        }
    }

    pub fn is_motor_vehicle(self) -> bool {
        matches!(self, AgentKind::Car | AgentKind::Truck | AgentKind::Bus)
    }

    pub fn is_vru(self) -> bool {
        matches!(self, AgentKind::Pedestrian | AgentKind::Bicycle)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" | "van" => Ok(AgentKind::Car),
            "truck" | "truck_bus" => Ok(AgentKind::Truck),
            "bus" => Ok(AgentKind::Bus),
            "pedestrian" | "ped" => Ok(AgentKind::Pedestrian),
            "bicycle" | "bike" | "cyclist" => Ok(AgentKind::Bicycle),
            other => Err(Error::Ingest(format!("unknown agent kind `{other}`"))),
        }
    }
}

/// Compass label of an intersection branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Compass {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Compass {
    pub fn as_str(self) -> &'static str {
        match self {
            Compass::N => "N",
            Compass::NE => "NE",
            Compass::E => "E",
            Compass::SE => "SE",
            Compass::S => "S",
            Compass::SW => "SW",
            Compass::W => "W",
            Compass::NW => "NW",
        }
    }

    /// Bearing of the branch in radians, CCW from +x (east).
    pub fn bearing(self) -> f64 {
        let deg = match self {
            Compass::E => 0.0,
            Compass::NE => 45.0,
            Compass::N => 90.0,
            Compass::NW => 135.0,
            Compass::W => 180.0,
            Compass::SW => 225.0,
            Compass::S => 270.0,
            Compass::SE => 315.0,
        };
        f64::to_radians(deg)
    }
}

impl fmt::Display for Compass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Compass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "N" => Compass::N,
            "NE" => Compass::NE,
            "E" => Compass::E,
            "SE" => Compass::SE,
            "S" => Compass::S,
            "SW" => Compass::SW,
            "W" => Compass::W,
            "NW" => Compass::NW,
            other => return Err(Error::Ingest(format!("unknown compass label `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSample {
    pub frame: i64,
    pub position: Vec2d,
    /// Radians CCW from +x, in (-pi, pi].
    pub heading: f64,
    pub velocity: Vec2d,
    pub acceleration: Vec2d,
}

/// Euclidean norm of the sample velocity.
pub fn speed(sample: &TrackSample) -> f64 {
    sample.velocity.norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: i64,
    pub kind: AgentKind,
    pub width: f64,
    pub length: f64,
    pub samples: Vec<TrackSample>,
    pub initial_frame: i64,
    pub final_frame: i64,
    /// Frames filled in by gap interpolation during ingestion.
    pub repaired_frames: Vec<i64>,
}

impl Track {
    /// Builds a track from gapless samples, recomputing the frame bounds.
    pub fn new(track_id: i64, kind: AgentKind, width: f64, length: f64, samples: Vec<TrackSample>) -> Self {
        let initial_frame = samples.first().map_or(0, |s| s.frame);
        let final_frame = samples.last().map_or(-1, |s| s.frame);
        Self {
            track_id,
            kind,
            width,
            length,
            samples,
            initial_frame,
            final_frame,
            repaired_frames: Vec::new(),
        }
    }

    pub fn sample_at(&self, frame: i64) -> Option<&TrackSample> {
        if frame < self.initial_frame || frame > self.final_frame {
            return None;
        }
        self.samples.get((frame - self.initial_frame) as usize)
    }

    pub fn frame_count(&self) -> usize {
        self.samples.len()
    }

    /// Lifetime in seconds: frame count divided by the frame rate.
    pub fn lifetime(&self, frame_rate: f64) -> f64 {
        (self.final_frame - self.initial_frame + 1) as f64 / frame_rate
    }

    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[0].position.dist(w[1].position))
            .sum()
    }

    pub fn max_speed(&self) -> f64 {
        self.samples.iter().map(speed).fold(0.0, f64::max)
    }

    /// Positions as a polyline, `None` when the track never moves.
    pub fn path(&self) -> Option<Polyline<f64>> {
        Polyline::new(self.samples.iter().map(|s| s.position).collect())
    }

    /// Copy restricted to `[start, end]` frames (inclusive), `None` if disjoint.
    pub fn clipped(&self, start: i64, end: i64) -> Option<Track> {
        let lo = start.max(self.initial_frame);
        let hi = end.min(self.final_frame);
        if lo > hi {
            return None;
        }
        let a = (lo - self.initial_frame) as usize;
        let b = (hi - self.initial_frame) as usize;
        let mut t = Track::new(self.track_id, self.kind, self.width, self.length, self.samples[a..=b].to_vec());
        t.repaired_frames = self
            .repaired_frames
            .iter()
            .copied()
            .filter(|f| (lo..=hi).contains(f))
            .collect();
        Some(t)
    }

    /// Footprint at a sample: rectangle for vehicles and bicycles, disc radius for pedestrians.
    pub fn footprint(&self, sample: &TrackSample, pedestrian_radius: f64) -> Footprint {
        footprint_of(self.kind, self.length, self.width, sample.position, sample.heading, pedestrian_radius)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width >= 0.0 && self.length >= 0.0) {
            return Err(Error::Ingest(format!("track {} has negative dimensions", self.track_id)));
        }
        if self.samples.is_empty() {
            return Err(Error::Ingest(format!("track {} has no samples", self.track_id)));
        }
        if (self.final_frame - self.initial_frame + 1) as usize != self.samples.len() {
            return Err(Error::Ingest(format!("track {} has frame gaps", self.track_id)));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.frame != self.initial_frame + i as i64 {
                return Err(Error::NonMonotoneFrames {
                    track_id: self.track_id,
                    frame: s.frame,
                });
            }
            if !(s.position.is_finite() && s.velocity.is_finite() && s.acceleration.is_finite() && s.heading.is_finite()) {
                return Err(Error::Ingest(format!(
                    "track {} has non-finite values at frame {}",
                    self.track_id, s.frame
                )));
            }
        }
        Ok(())
    }
}

/// Spatial extent of an agent at one instant.
#[derive(Debug, Clone, PartialEq)]
pub enum Footprint {
    Rect(ConvexPolygon<f64>),
    Disc { center: Vec2d, radius: f64 },
}

impl Footprint {
    pub fn overlaps_polygon(&self, poly: &ConvexPolygon<f64>) -> bool {
        match self {
            Footprint::Rect(r) => r.overlaps(poly),
            Footprint::Disc { center, radius } => poly.overlaps_disc(*center, *radius),
        }
    }

    pub fn overlaps(&self, other: &Footprint) -> bool {
        match (self, other) {
            (Footprint::Rect(a), Footprint::Rect(b)) => a.overlaps(b),
            (Footprint::Rect(a), Footprint::Disc { center, radius })
            | (Footprint::Disc { center, radius }, Footprint::Rect(a)) => a.overlaps_disc(*center, *radius),
            (Footprint::Disc { center: c1, radius: r1 }, Footprint::Disc { center: c2, radius: r2 }) => {
                c1.dist(*c2) <= r1 + r2
            }
        }
    }
}

pub fn footprint_of(kind: AgentKind, length: f64, width: f64, position: Vec2d, heading: f64, pedestrian_radius: f64) -> Footprint {
    if kind == AgentKind::Pedestrian || length <= 0.0 || width <= 0.0 {
        Footprint::Disc {
            center: position,
            radius: if kind == AgentKind::Pedestrian {
                pedestrian_radius
            } else {
                0.5 * length.max(width).max(2.0 * pedestrian_radius)
            },
        }
    } else {
        Footprint::Rect(ConvexPolygon::rectangle(position, heading, length, width))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub recording_id: i64,
    pub frame_rate: f64,
    pub traffic_space_id: String,
    pub tracks: Vec<Track>,
}

impl Recording {
    pub fn track(&self, id: i64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == id)
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Ingest(format!("invalid frame rate {}", self.frame_rate)));
        }
        let mut ids = BTreeSet::new();
        for t in &self.tracks {
            if !ids.insert(t.track_id) {
                return Err(Error::Ingest(format!("duplicate track id {}", t.track_id)));
            }
            t.validate()?;
        }
        Ok(())
    }
}

/// Canonical field name to source header, read from a `key=value` file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnMap {
    entries: BTreeMap<String, String>,
}

impl ColumnMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, canonical: &str, source: &str) -> Self {
        self.entries.insert(canonical.to_string(), source.to_string());
        self
    }

    /// Identity mapping for every canonical field.
    pub fn canonical() -> Self {
        let mut m = Self::new();
        for k in [
            "recording_id",
            "frame_rate",
            "traffic_space_id",
            "track_id",
            "kind",
            "width",
            "length",
            "frame",
            "x",
            "y",
            "heading",
            "vx",
            "vy",
            "ax",
            "ay",
        ] {
            m = m.with(k, k);
        }
        m
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Ingest(format!("column map line {}: expected key=value", n + 1)))?;
            m.entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, canonical: &str) -> Option<&str> {
        self.entries.get(canonical).map(String::as_str)
    }

    fn heading_in_degrees(&self) -> bool {
        matches!(self.get("heading_unit"), Some("deg") | Some("degrees"))
    }
}

/// Affine map applied to source coordinates: `x' = a x + b y + e`, `y' = c x + d y + f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub m: [f64; 6],
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        }
    }

    fn apply_point(&self, p: Vec2d) -> Vec2d {
        let [a, b, c, d, e, f] = self.m;
        Vec2::new(a * p.x + b * p.y + e, c * p.x + d * p.y + f)
    }

    fn apply_vector(&self, p: Vec2d) -> Vec2d {
        let [a, b, c, d, _, _] = self.m;
        Vec2::new(a * p.x + b * p.y, c * p.x + d * p.y)
    }

    fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::Ingest(format!("cannot open {}: {e}", path.display())),
                _ => Error::Csv(e),
            })?;
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            file: path.display().to_string(),
            headers,
            rows,
        })
    }

    /// Column index of a canonical field. Unmapped fields fall back to the
    /// canonical name; a mapped but absent header is an error.
    fn column(&self, map: &ColumnMap, canonical: &str, required: bool) -> Result<Option<usize>> {
        let mapped = map.get(canonical);
        let source = mapped.unwrap_or(canonical);
        match self.headers.iter().position(|h| h == source) {
            Some(i) => Ok(Some(i)),
            None if required || mapped.is_some() => Err(Error::MissingColumn {
                file: self.file.clone(),
                column: source.to_string(),
            }),
            None => Ok(None),
        }
    }
}

fn parse_num<T: FromStr>(rec: &csv::StringRecord, idx: usize, what: &str, row: usize) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse::<T>()
        .map_err(|_| Error::Ingest(format!("row {}: cannot parse `{raw}` as {what}", row + 2)))
}

/// Loads a recording from its three CSV files.
pub fn load_recording(meta_file: &Path, tracks_meta_file: &Path, tracks_file: &Path, column_map: &ColumnMap) -> Result<Recording> {
    let meta = Table::read(meta_file)?;
    let rec_row = meta
        .rows
        .first()
        .ok_or_else(|| Error::Ingest(format!("{} has no data row", meta.file)))?;
    let recording_id: i64 = parse_num(rec_row, meta.column(column_map, "recording_id", true)?.unwrap(), "recording_id", 0)?;
    let frame_rate = match meta.column(column_map, "frame_rate", false)? {
        Some(i) => parse_num::<f64>(rec_row, i, "frame_rate", 0)?,
        None => DEFAULT_FRAME_RATE,
    };
    let traffic_space_id = match meta.column(column_map, "traffic_space_id", false)? {
        Some(i) => rec_row.get(i).unwrap_or("").to_string(),
        None => String::new(),
    };
    let affine = match meta.column(column_map, "affine", false)? {
        Some(i) => {
            let raw = rec_row.get(i).unwrap_or("");
            let vals: Vec<f64> = raw
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Ingest(format!("cannot parse affine `{raw}`")))?;
            if vals.len() != 6 {
                return Err(Error::Ingest(format!("affine needs 6 numbers, got {}", vals.len())));
            }
            Affine {
                m: [vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]],
            }
        }
        None => Affine::identity(),
    };

    let tmeta = Table::read(tracks_meta_file)?;
    let c_id = tmeta.column(column_map, "track_id", true)?.unwrap();
    let c_kind = tmeta.column(column_map, "kind", true)?.unwrap();
    let c_w = tmeta.column(column_map, "width", false)?;
    let c_l = tmeta.column(column_map, "length", false)?;
    let mut dims: BTreeMap<i64, (AgentKind, f64, f64)> = BTreeMap::new();
    for (r, row) in tmeta.rows.iter().enumerate() {
        let id: i64 = parse_num(row, c_id, "track_id", r)?;
        let kind: AgentKind = row.get(c_kind).unwrap_or("").parse()?;
        let w = c_w.map(|c| parse_num::<f64>(row, c, "width", r)).transpose()?.unwrap_or(0.0);
        let l = c_l.map(|c| parse_num::<f64>(row, c, "length", r)).transpose()?.unwrap_or(0.0);
        let (w, l) = if kind == AgentKind::Pedestrian { (0.0, 0.0) } else { (w, l) };
        if dims.insert(id, (kind, w, l)).is_some() {
            return Err(Error::Ingest(format!("duplicate track id {id} in {}", tmeta.file)));
        }
    }

    let samples = Table::read(tracks_file)?;
    let s_id = samples.column(column_map, "track_id", true)?.unwrap();
    let s_frame = samples.column(column_map, "frame", true)?.unwrap();
    let s_x = samples.column(column_map, "x", true)?.unwrap();
    let s_y = samples.column(column_map, "y", true)?.unwrap();
    let s_h = samples.column(column_map, "heading", false)?;
    let s_vx = samples.column(column_map, "vx", false)?;
    let s_vy = samples.column(column_map, "vy", false)?;
    let s_ax = samples.column(column_map, "ax", false)?;
    let s_ay = samples.column(column_map, "ay", false)?;
    let velocity_mapped = s_vx.is_some() && s_vy.is_some();
    let accel_mapped = s_ax.is_some() && s_ay.is_some();
    let heading_deg = column_map.heading_in_degrees();

    let mut raw: BTreeMap<i64, Vec<RawSample>> = BTreeMap::new();
    for (r, row) in samples.rows.iter().enumerate() {
        let id: i64 = parse_num(row, s_id, "track_id", r)?;
        let frame: i64 = parse_num(row, s_frame, "frame", r)?;
        if frame < 0 {
            return Err(Error::Ingest(format!("row {}: negative frame {frame}", r + 2)));
        }
        let p = affine.apply_point(Vec2::new(parse_num(row, s_x, "x", r)?, parse_num(row, s_y, "y", r)?));
        let opt = |c: Option<usize>, what: &str| c.map(|c| parse_num::<f64>(row, c, what, r)).transpose();
        let heading = opt(s_h, "heading")?.map(|h| if heading_deg { h.to_radians() } else { h });
        let vel = match (opt(s_vx, "vx")?, opt(s_vy, "vy")?) {
            (Some(x), Some(y)) => Some(affine.apply_vector(Vec2::new(x, y))),
            _ => None,
        };
        let acc = match (opt(s_ax, "ax")?, opt(s_ay, "ay")?) {
            (Some(x), Some(y)) => Some(affine.apply_vector(Vec2::new(x, y))),
            _ => None,
        };
        let list = raw.entry(id).or_default();
        if let Some(prev) = list.last() {
            if frame <= prev.frame {
                return Err(Error::NonMonotoneFrames { track_id: id, frame });
            }
        }
        list.push(RawSample {
            frame,
            position: p,
            heading,
            velocity: vel,
            acceleration: acc,
        });
    }

    let rotation = if affine.is_identity() {
        0.0
    } else {
        affine.m[2].atan2(affine.m[0])
    };
    let mut tracks = Vec::with_capacity(raw.len());
    for (id, list) in raw {
        let (kind, w, l) = *dims
            .get(&id)
            .ok_or_else(|| Error::Ingest(format!("track {id} has samples but no meta row")))?;
        tracks.push(build_track(id, kind, w, l, list, frame_rate, velocity_mapped, accel_mapped, rotation));
    }
    let rec = Recording {
        recording_id,
        frame_rate,
        traffic_space_id,
        tracks,
    };
    rec.validate()?;
    Ok(rec)
}

#[derive(Debug, Clone, Copy)]
struct RawSample {
    frame: i64,
    position: Vec2d,
    heading: Option<f64>,
    velocity: Option<Vec2d>,
    acceleration: Option<Vec2d>,
}

#[allow(clippy::too_many_arguments)]
fn build_track(
    id: i64,
    kind: AgentKind,
    width: f64,
    length: f64,
    list: Vec<RawSample>,
    frame_rate: f64,
    velocity_mapped: bool,
    accel_mapped: bool,
    rotation: f64,
) -> Track {
    // gap repair by linear interpolation
    let mut filled: Vec<RawSample> = Vec::with_capacity(list.len());
    let mut repaired = Vec::new();
    for s in list {
        if let Some(prev) = filled.last().copied() {
            let gap = s.frame - prev.frame;
            for k in 1..gap {
                let t = k as f64 / gap as f64;
                let lerp_opt = |a: Option<Vec2d>, b: Option<Vec2d>| match (a, b) {
                    (Some(a), Some(b)) => Some(a.lerp(b, t)),
                    _ => None,
                };
                let heading = match (prev.heading, s.heading) {
                    (Some(a), Some(b)) => Some(a + wrap_angle(b - a) * t),
                    _ => None,
                };
                filled.push(RawSample {
                    frame: prev.frame + k,
                    position: prev.position.lerp(s.position, t),
                    heading,
                    velocity: lerp_opt(prev.velocity, s.velocity),
                    acceleration: lerp_opt(prev.acceleration, s.acceleration),
                });
                repaired.push(prev.frame + k);
            }
        }
        filled.push(s);
    }

    let positions: Vec<Vec2d> = filled.iter().map(|s| s.position).collect();
    let velocities: Vec<Vec2d> = if velocity_mapped {
        filled.iter().map(|s| s.velocity.unwrap_or_default()).collect()
    } else {
        central_differences(&positions, frame_rate)
    };
    let accelerations: Vec<Vec2d> = if accel_mapped {
        filled.iter().map(|s| s.acceleration.unwrap_or_default()).collect()
    } else {
        central_differences(&velocities, frame_rate)
    };

    let mut last_heading = 0.0;
    let mut samples = Vec::with_capacity(filled.len());
    for (i, s) in filled.iter().enumerate() {
        let heading = match s.heading {
            Some(h) => wrap_angle(h + rotation),
            None => {
                let v = velocities[i];
                if v.norm() > 0.1 {
                    v.angle()
                } else if i == 0 {
                    // stationary at birth: look ahead for the first motion
                    velocities
                        .iter()
                        .find(|v| v.norm() > 0.1)
                        .map_or(0.0, |v| v.angle())
                } else {
                    last_heading
                }
            }
        };
        let heading = wrap_angle(heading);
        last_heading = heading;
        samples.push(TrackSample {
            frame: s.frame,
            position: s.position,
            heading,
            velocity: velocities[i],
            acceleration: accelerations[i],
        });
    }
    let mut t = Track::new(id, kind, width, length, samples);
    t.repaired_frames = repaired;
    t
}

/// Central differences scaled by `rate`; one-sided at both ends.
pub fn central_differences(values: &[Vec2d], rate: f64) -> Vec<Vec2d> {
    let n = values.len();
    match n {
        0 => Vec::new(),
        1 => vec![Vec2::zero()],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    (values[1] - values[0]) * rate
                } else if i == n - 1 {
                    (values[n - 1] - values[n - 2]) * rate
                } else {
                    (values[i + 1] - values[i - 1]) * (rate * 0.5)
                }
            })
            .collect(),
    }
}

/// Writes the recording as a canonical-header CSV triple.
pub fn write_recording(rec: &Recording, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = csv::Writer::from_path(dir.join("recording_meta.csv"))?;
    w.write_record(["recording_id", "frame_rate", "traffic_space_id"])?;
    w.write_record([
        rec.recording_id.to_string(),
        rec.frame_rate.to_string(),
        rec.traffic_space_id.clone(),
    ])?;
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("tracks_meta.csv"))?;
    w.write_record(["track_id", "kind", "width", "length"])?;
    for t in &rec.tracks {
        w.write_record([
            t.track_id.to_string(),
            t.kind.to_string(),
            t.width.to_string(),
            t.length.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("tracks.csv"))?;
    w.write_record(["track_id", "frame", "x", "y", "heading", "vx", "vy", "ax", "ay"])?;
    for t in &rec.tracks {
        for s in &t.samples {
            w.write_record([
                t.track_id.to_string(),
                s.frame.to_string(),
                s.position.x.to_string(),
                s.position.y.to_string(),
                s.heading.to_string(),
                s.velocity.x.to_string(),
                s.velocity.y.to_string(),
                s.acceleration.x.to_string(),
                s.acceleration.y.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Loads a directory written by [`write_recording`].
pub fn load_recording_dir(dir: &Path) -> Result<Recording> {
    load_recording(
        &dir.join("recording_meta.csv"),
        &dir.join("tracks_meta.csv"),
        &dir.join("tracks.csv"),
        &ColumnMap::canonical(),
    )
}

// ---------------------------------------------------------------------------
// Traffic space

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    pub centerline: Polyline<f64>,
    pub width: f64,
    pub speed_limit: f64,
    /// Lower rank = higher priority.
    pub priority_rank: i32,
    pub successors: Vec<String>,
    /// Arc length of the yield line, for non-priority lanes.
    pub yield_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub label: Compass,
    pub position: Vec2d,
    pub kinds: BTreeSet<AgentKind>,
}

/// Crossing of two lane centerlines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneConflict {
    pub lane_a: usize,
    pub lane_b: usize,
    pub s_a: f64,
    pub s_b: f64,
    pub point: Vec2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpace {
    pub id: String,
    pub lanes: Vec<Lane>,
    pub crosswalks: Vec<Vec<Vec2d>>,
    pub reference_points: Vec<ReferencePoint>,
    conflicts: Vec<LaneConflict>,
    lane_index: HashMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    pub id: String,
    pub centerline: Vec<[f64; 2]>,
    pub width: f64,
    pub speed_limit: f64,
    pub priority_rank: i32,
    #[serde(default)]
    pub successors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yield_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePointSpec {
    pub label: String,
    pub xy: [f64; 2],
    pub kinds: Vec<AgentKind>,
}

/// Serialized form of a [`TrafficSpace`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpaceSpec {
    pub id: String,
    pub lanes: Vec<LaneSpec>,
    #[serde(default)]
    pub crosswalks: Vec<Vec<[f64; 2]>>,
    pub reference_points: Vec<ReferencePointSpec>,
}

fn v2(p: [f64; 2]) -> Vec2d {
    Vec2::new(p[0], p[1])
}

impl TrafficSpace {
    pub fn from_spec(spec: &TrafficSpaceSpec) -> Result<Self> {
        let mut lanes = Vec::with_capacity(spec.lanes.len());
        let mut lane_index = HashMap::new();
        for (i, l) in spec.lanes.iter().enumerate() {
            let field = |f: &str| format!("lanes[{i}].{f}");
            if l.centerline.len() < 2 {
                return Err(Error::schema(field("centerline"), "polyline needs at least 2 points"));
            }
            let centerline = Polyline::new(l.centerline.iter().copied().map(v2).collect())
                .ok_or_else(|| Error::schema(field("centerline"), "polyline must have 2 distinct finite points"))?;
            if !(l.width > 0.0) {
                return Err(Error::schema(field("width"), "must be > 0"));
            }
            if !(l.speed_limit > 0.0) {
                return Err(Error::schema(field("speed_limit"), "must be > 0"));
            }
            if let Some(ys) = l.yield_s {
                if !(0.0..=centerline.length()).contains(&ys) {
                    return Err(Error::schema(field("yield_s"), "outside the centerline"));
                }
            }
            if lane_index.insert(l.id.clone(), i).is_some() {
                return Err(Error::schema(field("id"), format!("duplicate lane id `{}`", l.id)));
            }
            lanes.push(Lane {
                id: l.id.clone(),
                centerline,
                width: l.width,
                speed_limit: l.speed_limit,
                priority_rank: l.priority_rank,
                successors: l.successors.clone(),
                yield_s: l.yield_s,
            });
        }
        for (i, l) in lanes.iter().enumerate() {
            for s in &l.successors {
                if !lane_index.contains_key(s) {
                    return Err(Error::schema(format!("lanes[{i}].successors"), format!("unknown lane `{s}`")));
                }
            }
        }
        let mut crosswalks = Vec::new();
        for (i, c) in spec.crosswalks.iter().enumerate() {
            if c.len() < 3 {
                return Err(Error::schema(format!("crosswalks[{i}]"), "polygon needs at least 3 vertices"));
            }
            crosswalks.push(c.iter().copied().map(v2).collect());
        }
        let mut reference_points = Vec::new();
        let mut seen: BTreeSet<(AgentKind, Compass)> = BTreeSet::new();
        for (i, r) in spec.reference_points.iter().enumerate() {
            let label: Compass = r
                .label
                .parse()
                .map_err(|_| Error::schema(format!("reference_points[{i}].label"), format!("unknown label `{}`", r.label)))?;
            if r.kinds.is_empty() {
                return Err(Error::schema(format!("reference_points[{i}].kinds"), "empty kind set"));
            }
            let kinds: BTreeSet<AgentKind> = r.kinds.iter().copied().collect();
            for k in &kinds {
                if !seen.insert((*k, label)) {
                    return Err(Error::schema(
                        format!("reference_points[{i}].label"),
                        format!("duplicate label `{label}` for kind {k}"),
                    ));
                }
            }
            reference_points.push(ReferencePoint {
                label,
                position: v2(r.xy),
                kinds,
            });
        }
        let conflicts = lane_conflicts(&lanes);
        Ok(Self {
            id: spec.id.clone(),
            lanes,
            crosswalks,
            reference_points,
            conflicts,
            lane_index,
        })
    }

    pub fn to_spec(&self) -> TrafficSpaceSpec {
        TrafficSpaceSpec {
            id: self.id.clone(),
            lanes: self
                .lanes
                .iter()
                .map(|l| LaneSpec {
                    id: l.id.clone(),
                    centerline: l.centerline.points().iter().map(|p| [p.x, p.y]).collect(),
                    width: l.width,
                    speed_limit: l.speed_limit,
                    priority_rank: l.priority_rank,
                    successors: l.successors.clone(),
                    yield_s: l.yield_s,
                })
                .collect(),
            crosswalks: self
                .crosswalks
                .iter()
                .map(|c| c.iter().map(|p| [p.x, p.y]).collect())
                .collect(),
            reference_points: self
                .reference_points
                .iter()
                .map(|r| ReferencePointSpec {
                    label: r.label.to_string(),
                    xy: [r.position.x, r.position.y],
                    kinds: r.kinds.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn lane_idx(&self, id: &str) -> Option<usize> {
        self.lane_index.get(id).copied()
    }

    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lane_idx(id).map(|i| &self.lanes[i])
    }

    pub fn conflicts(&self) -> &[LaneConflict] {
        &self.conflicts
    }

    pub fn reference_points_for(&self, kind: AgentKind) -> impl Iterator<Item = &ReferencePoint> {
        self.reference_points.iter().filter(move |r| r.kinds.contains(&kind))
    }

    /// Shortest successor chain from lane `from` to lane `to` (BFS, ties by id order).
    pub fn lane_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let n = self.lanes.len();
        let mut prev = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        seen[from] = true;
        queue.push_back(from);
        while let Some(u) = queue.pop_front() {
            if u == to {
                let mut path = vec![to];
                let mut c = to;
                while c != from {
                    c = prev[c];
                    path.push(c);
                }
                path.reverse();
                return Some(path);
            }
            let mut next: Vec<usize> = self.lanes[u]
                .successors
                .iter()
                .filter_map(|s| self.lane_idx(s))
                .collect();
            next.sort_by(|a, b| self.lanes[*a].id.cmp(&self.lanes[*b].id));
            for v in next {
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        None
    }

    /// Lane best matching a pose: small lateral distance and aligned heading.
    pub fn nearest_lane(&self, position: Vec2d, heading: f64, max_distance: f64) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, l) in self.lanes.iter().enumerate() {
            let pr = l.centerline.project(position);
            if pr.distance > max_distance {
                continue;
            }
            let dh = wrap_angle(l.centerline.heading_at(pr.s) - heading).abs();
            if dh > std::f64::consts::FRAC_PI_2 {
                continue;
            }
            let cost = pr.distance + 2.0 * dh;
            if best.map_or(true, |(c, _)| cost < c) {
                best = Some((cost, i));
            }
        }
        best.map(|(_, i)| i)
    }
}

fn lane_conflicts(lanes: &[Lane]) -> Vec<LaneConflict> {
    let mut out = Vec::new();
    for a in 0..lanes.len() {
        for b in (a + 1)..lanes.len() {
            let la = &lanes[a];
            let lb = &lanes[b];
            if la.successors.contains(&lb.id) || lb.successors.contains(&la.id) {
                continue;
            }
            if !la.centerline.bounds().overlaps(&lb.centerline.bounds()) {
                continue;
            }
            let pa = la.centerline.points();
            let pb = lb.centerline.points();
            let ca = la.centerline.arc_lengths();
            let cb = lb.centerline.arc_lengths();
            'outer: for i in 0..pa.len() - 1 {
                for j in 0..pb.len() - 1 {
                    if let Some((p, t, u)) = segment_intersection(pa[i], pa[i + 1], pb[j], pb[j + 1]) {
                        let s_a = ca[i] + (ca[i + 1] - ca[i]) * t;
                        let s_b = cb[j] + (cb[j + 1] - cb[j]) * u;
                        // shared start or end points are merges/diverges, not crossings
                        let at_end = |s: f64, len: f64| s < 1e-6 || s > len - 1e-6;
                        if at_end(s_a, la.centerline.length()) && at_end(s_b, lb.centerline.length()) {
                            continue;
                        }
                        out.push(LaneConflict {
                            lane_a: a,
                            lane_b: b,
                            s_a,
                            s_b,
                            point: p,
                        });
                        break 'outer;
                    }
                }
            }
        }
    }
    out
}

/// Loads and validates a traffic-space JSON file.
pub fn load_traffic_space(map_file: &Path) -> Result<TrafficSpace> {
    let text = fs::read_to_string(map_file).map_err(|e| Error::io(map_file, e))?;
    parse_traffic_space(&text)
}

pub fn parse_traffic_space(text: &str) -> Result<TrafficSpace> {
    let spec: TrafficSpaceSpec = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<document>".to_string());
        Error::schema(field, msg)
    })?;
    TrafficSpace::from_spec(&spec)
}
