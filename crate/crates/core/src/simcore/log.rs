//! Per-frame simulation log and its CSV form.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajdata::{AgentKind, Recording, Track, TrackSample};
use crate::Vec2d;

use super::world::{Collision, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub frame: i64,
    pub agent_id: i64,
    pub kind: AgentKind,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub delta: f64,
    pub mode: Mode,
}

pub const LOG_HEADER: &str = "frame,agent_id,kind,x,y,heading,v,delta,mode";

impl LogRow {
    pub fn position(&self) -> Vec2d {
        Vec2d::new(self.x, self.y)
    }

    /// One CSV line; floats use the shortest round-trip representation.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.frame,
            self.agent_id,
            self.kind.as_str(),
            self.x,
            self.y,
            self.heading,
            self.v,
            self.delta,
            self.mode.as_str()
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimLog {
    /// Time between logged frames [s].
    pub frame_period: f64,
    /// One entry per logged frame, rows sorted by agent id.
    pub frames: Vec<Vec<LogRow>>,
    pub collisions: Vec<Collision>,
}

impl SimLog {
    pub fn new(frame_period: f64) -> Self {
        Self {
            frame_period,
            frames: Vec::new(),
            collisions: Vec::new(),
        }
    }

    pub fn push_frame(&mut self, rows: Vec<LogRow>) {
        self.frames.push(rows);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &LogRow> {
        self.frames.iter().flatten()
    }

    /// All rows of one agent in frame order.
    pub fn agent_rows(&self, id: i64) -> Vec<LogRow> {
        self.rows().filter(|r| r.agent_id == id).copied().collect()
    }

    pub fn agent_ids(&self) -> Vec<i64> {
        let mut ids: Vec<i64> = self.rows().map(|r| r.agent_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{LOG_HEADER}")?;
        for r in self.rows() {
            writeln!(w, "{}", r.csv_line())?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// Parses a log written by [`SimLog::write_csv`]; rows are grouped by frame.
    pub fn read_csv(text: &str, frame_period: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>().join(",") != LOG_HEADER {
            return Err(Error::schema("header", format!("unexpected log header `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut frames: BTreeMap<i64, Vec<LogRow>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::schema(&headers[i], format!("not a number: `{}`", &rec[i])))
            };
            let frame: i64 = rec[0].parse().map_err(|_| Error::schema("frame", format!("not an integer: `{}`", &rec[0])))?;
            let row = LogRow {
                frame,
                agent_id: rec[1].parse().map_err(|_| Error::schema("agent_id", format!("not an integer: `{}`", &rec[1])))?,
                kind: rec[2].parse()?,
                x: f(3)?,
                y: f(4)?,
                heading: f(5)?,
                v: f(6)?,
                delta: f(7)?,
                mode: match &rec[8] {
                    "replayed" => Mode::Replayed,
                    "agent" => Mode::Agent,
                    other => return Err(Error::schema("mode", format!("expected replayed or agent, got `{other}`"))),
                },
            };
            frames.entry(frame).or_default().push(row);
        }
        Ok(Self {
            frame_period,
            frames: frames.into_values().collect(),
            collisions: Vec::new(),
        })
    }

    /// Converts the log into a recording so it can be fed to extraction.
    /// `dims` supplies (width, length) per agent; unknown agents get kind defaults.
    pub fn to_recording(&self, recording_id: i64, traffic_space_id: &str, dims: &dyn Fn(i64, AgentKind) -> (f64, f64)) -> Recording {
        let mut by_agent: BTreeMap<i64, (AgentKind, Vec<TrackSample>)> = BTreeMap::new();
        for r in self.rows() {
            let e = by_agent.entry(r.agent_id).or_insert((r.kind, Vec::new()));
            // logs may contain gaps (agent inactive); only the first contiguous run is kept
            if let Some(last) = e.1.last() {
                if r.frame != last.frame + 1 {
                    continue;
                }
            }
            e.1.push(TrackSample {
                frame: r.frame,
                position: r.position(),
                heading: r.heading,
                velocity: Vec2d::from_angle(r.heading) * r.v,
                acceleration: Vec2d::zero(),
            });
        }
        let tracks = by_agent
            .into_iter()
            .map(|(id, (kind, samples))| {
                let (w, l) = dims(id, kind);
                Track::new(id, kind, w, l, samples)
            })
            .collect();
        Recording {
            recording_id,
            frame_rate: 1.0 / self.frame_period,
            traffic_space_id: traffic_space_id.to_string(),
            tracks,
        }
    }
}
