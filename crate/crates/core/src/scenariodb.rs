//! Scenario database: content-addressed JSON records, queries, logical
//! scenarios (empirical marginals per functional type) and sampling.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extraction::stats::quantile_sorted;
use crate::extraction::{ConcreteScenario, FunctionalType, IntersectingScenario, PetResult, ScenarioCategory};
use crate::trajdata::{AgentKind, Track, TrackSample};
use crate::Vec2d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Synthetic,
    Sampled,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::Synthetic => "synthetic",
            Source::Sampled => "sampled",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Source::Real),
            "synthetic" => Ok(Source::Synthetic),
            "sampled" => Ok(Source::Sampled),
            other => Err(Error::Config(format!("unknown source `{other}` (expected real, synthetic or sampled)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    pub pipeline_version: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRecord {
    pub scenario: ConcreteScenario,
    pub provenance: Provenance,
}

// ---------------------------------------------------------------------------
// JSON form

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaJson {
    recording_id: i64,
    space_id: String,
    source: Source,
    pipeline_version: String,
    config_hash: String,
    frame_rate: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoreJson {
    ego: i64,
    challenger: i64,
    category: ScenarioCategory,
    functional_type: FunctionalType,
    pet: PetResult,
    window: (i64, i64),
    critical: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleJson {
    frame: i64,
    x: f64,
    y: f64,
    heading: f64,
    vx: f64,
    vy: f64,
    ax: f64,
    ay: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParticipantJson {
    track_id: i64,
    kind: AgentKind,
    width: f64,
    length: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    repaired_frames: Vec<i64>,
    samples: Vec<SampleJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioJson {
    meta: MetaJson,
    core: CoreJson,
    participants: Vec<ParticipantJson>,
}

fn check_finite(rec: &ScenarioRecord) -> Result<()> {
    for t in &rec.scenario.participants {
        for s in &t.samples {
            let ok = s.position.is_finite() && s.heading.is_finite() && s.velocity.is_finite() && s.acceleration.is_finite();
            if !ok {
                return Err(Error::schema(
                    format!("participants[{}].samples[frame {}]", t.track_id, s.frame),
                    "non-finite value cannot be stored",
                ));
            }
        }
    }
    Ok(())
}

impl ScenarioRecord {
    /// Pretty-printed JSON; floats are written in shortest round-trip form.
    pub fn to_json(&self) -> Result<String> {
        check_finite(self)?;
        let scn = &self.scenario;
        let c = &scn.core;
        let doc = ScenarioJson {
            meta: MetaJson {
                recording_id: scn.recording_id,
                space_id: scn.traffic_space_id.clone(),
                source: self.provenance.source,
                pipeline_version: self.provenance.pipeline_version.clone(),
                config_hash: self.provenance.config_hash.clone(),
                frame_rate: scn.frame_rate,
            },
            core: CoreJson {
                ego: c.ego_track_id,
                challenger: c.challenger_track_id,
                category: c.category,
                functional_type: c.functional_type.clone(),
                pet: c.pet.clone(),
                window: c.frame_window,
                critical: c.critical,
            },
            participants: scn
                .participants
                .iter()
                .map(|t| ParticipantJson {
                    track_id: t.track_id,
                    kind: t.kind,
                    width: t.width,
                    length: t.length,
                    repaired_frames: t.repaired_frames.clone(),
                    samples: t
                        .samples
                        .iter()
                        .map(|s| SampleJson {
                            frame: s.frame,
                            x: s.position.x,
                            y: s.position.y,
                            heading: s.heading,
                            vx: s.velocity.x,
                            vy: s.velocity.y,
                            ax: s.acceleration.x,
                            ay: s.acceleration.y,
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScenarioJson = serde_json::from_str(text)?;
        let participants = doc
            .participants
            .into_iter()
            .map(|p| {
                let samples = p
                    .samples
                    .into_iter()
                    .map(|s| TrackSample {
                        frame: s.frame,
                        position: Vec2d::new(s.x, s.y),
                        heading: s.heading,
                        velocity: Vec2d::new(s.vx, s.vy),
                        acceleration: Vec2d::new(s.ax, s.ay),
                    })
                    .collect();
                let mut t = Track::new(p.track_id, p.kind, p.width, p.length, samples);
                t.repaired_frames = p.repaired_frames;
                t
            })
            .collect();
        Ok(ScenarioRecord {
            scenario: ConcreteScenario {
                core: IntersectingScenario {
                    ego_track_id: doc.core.ego,
                    challenger_track_id: doc.core.challenger,
                    category: doc.core.category,
                    functional_type: doc.core.functional_type,
                    pet: doc.core.pet,
                    frame_window: doc.core.window,
                    critical: doc.core.critical,
                },
                participants,
                recording_id: doc.meta.recording_id,
                traffic_space_id: doc.meta.space_id,
                frame_rate: doc.meta.frame_rate,
            },
            provenance: Provenance {
                source: doc.meta.source,
                pipeline_version: doc.meta.pipeline_version,
                config_hash: doc.meta.config_hash,
            },
        })
    }

    /// Content address: SHA-256 of the JSON form.
    pub fn content_id(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

// ---------------------------------------------------------------------------
// Database

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub recording_id: i64,
    pub ego: i64,
    pub challenger: i64,
    pub category: ScenarioCategory,
    pub functional_type: FunctionalType,
    pub pet: Option<f64>,
    pub critical: bool,
    pub source: Source,
}

/// Conjunctive filter; unset fields match everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Query {
    pub category: Option<ScenarioCategory>,
    pub functional_type: Option<FunctionalType>,
    /// Inclusive PET range [s]; records without a PET never match a range.
    pub pet_min: Option<f64>,
    pub pet_max: Option<f64>,
    pub source: Option<Source>,
}

impl Query {
    pub fn matches(&self, e: &IndexEntry) -> bool {
        if self.category.is_some_and(|c| c != e.category) {
            return false;
        }
        if self.functional_type.as_ref().is_some_and(|t| *t != e.functional_type) {
            return false;
        }
        if self.source.is_some_and(|s| s != e.source) {
            return false;
        }
        if self.pet_min.is_some() || self.pet_max.is_some() {
            let Some(p) = e.pet else { return false };
            if self.pet_min.is_some_and(|lo| p < lo) || self.pet_max.is_some_and(|hi| p > hi) {
                return false;
            }
        }
        true
    }
}

/// One JSON file per scenario under `scenarios/`, named by content hash,
/// plus `index.json` listing every record sorted by id.
#[derive(Debug)]
pub struct ScenarioDb {
    root: PathBuf,
    index: BTreeMap<String, IndexEntry>,
}

const INDEX_FILE: &str = "index.json";
const SCENARIO_DIR: &str = "scenarios";

impl ScenarioDb {
    /// Opens (or creates) a database directory.
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join(SCENARIO_DIR)).map_err(|e| Error::io(root, e))?;
        let index_path = root.join(INDEX_FILE);
        let index = if index_path.exists() {
            let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
            let entries: Vec<IndexEntry> = serde_json::from_str(&text)?;
            entries.into_iter().map(|e| (e.id.clone(), e)).collect()
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            root: root.to_path_buf(),
            index,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.index.values()
    }

    fn record_path(&self, id: &str) -> PathBuf {
        self.root.join(SCENARIO_DIR).join(format!("{id}.json"))
    }

    fn write_index(&self) -> Result<()> {
        let entries: Vec<&IndexEntry> = self.index.values().collect();
        let path = self.root.join(INDEX_FILE);
        let tmp = self.root.join(".index.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&entries)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// Stores a record and returns its id. Storing an identical record again is a no-op.
    pub fn store(&mut self, rec: &ScenarioRecord) -> Result<String> {
        let json = rec.to_json()?;
        let id = hex::encode(Sha256::digest(json.as_bytes()));
        let path = self.record_path(&id);
        if !path.exists() {
            fs::write(&path, &json).map_err(|e| Error::io(&path, e))?;
        }
        let c = &rec.scenario.core;
        self.index.insert(
            id.clone(),
            IndexEntry {
                id: id.clone(),
                recording_id: rec.scenario.recording_id,
                ego: c.ego_track_id,
                challenger: c.challenger_track_id,
                category: c.category,
                functional_type: c.functional_type.clone(),
                pet: c.pet.pet,
                critical: c.critical,
                source: rec.provenance.source,
            },
        );
        self.write_index()?;
        Ok(id)
    }

    pub fn load(&self, id: &str) -> Result<ScenarioRecord> {
        if !self.index.contains_key(id) {
            return Err(Error::NotFound(format!("scenario `{id}`")));
        }
        let path = self.record_path(id);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        ScenarioRecord::from_json(&text)
    }

    /// Ids of matching records in ascending order.
    pub fn query(&self, q: &Query) -> Vec<String> {
        self.index.values().filter(|e| q.matches(e)).map(|e| e.id.clone()).collect()
    }

    pub fn functional_types(&self) -> Vec<FunctionalType> {
        let mut v: Vec<FunctionalType> = self.index.values().map(|e| e.functional_type.clone()).collect();
        v.sort();
        v.dedup();
        v
    }
}

// ---------------------------------------------------------------------------
// Logical scenarios

/// Parameters describing one concrete scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParameters {
    /// Distance the ego travels from the window start to the conflict area
    /// [m]; negative when it entered the area before the window starts.
    pub ego_distance: f64,
    /// Same for the challenger [m].
    pub challenger_distance: f64,
    /// Speeds at the window start [m/s].
    pub ego_speed: f64,
    pub challenger_speed: f64,
    pub pet: f64,
    pub participants: usize,
}

pub const PARAMETER_NAMES: [&str; 6] = ["ego_distance", "challenger_distance", "ego_speed", "challenger_speed", "pet", "participants"];

impl ScenarioParameters {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "ego_distance" => self.ego_distance,
            "challenger_distance" => self.challenger_distance,
            "ego_speed" => self.ego_speed,
            "challenger_speed" => self.challenger_speed,
            "pet" => self.pet,
            "participants" => self.participants as f64,
            _ => return None,
        })
    }
}

/// Path length covered by `track` from `t0` to `t1` (seconds); negative when `t1 < t0`.
fn distance_between(track: &Track, t0: f64, t1: f64, rate: f64) -> f64 {
    if t1 < t0 {
        return -distance_between(track, t1, t0, rate);
    }
    let mut d = 0.0;
    for w in track.samples.windows(2) {
        let (a, b) = (w[0].frame as f64 / rate, w[1].frame as f64 / rate);
        let lo = a.max(t0);
        let hi = b.min(t1);
        if hi > lo {
            d += w[0].position.dist(w[1].position) * (hi - lo) / (b - a);
        }
    }
    d
}

/// Parameter vector of a scenario, or `None` when its PET is unknown.
pub fn scenario_parameters(scn: &ConcreteScenario) -> Option<ScenarioParameters> {
    let c = &scn.core;
    let pet = c.pet.pet?;
    let rate = scn.frame_rate;
    let ego = scn.participant(c.ego_track_id)?;
    let ch = scn.participant(c.challenger_track_id)?;
    let entry_of = |id: i64| -> Option<f64> {
        if c.pet.first_agent == Some(id) {
            c.pet.first_interval.map(|i| i.0)
        } else if c.pet.second_agent == Some(id) {
            c.pet.second_interval.map(|i| i.0)
        } else {
            None
        }
    };
    let start = |t: &Track| t.samples.first().map(|s| (s.frame as f64 / rate, s.velocity.norm()));
    let (e0, ev) = start(ego)?;
    let (c0, cv) = start(ch)?;
    Some(ScenarioParameters {
        ego_distance: distance_between(ego, e0, entry_of(ego.track_id)?, rate),
        challenger_distance: distance_between(ch, c0, entry_of(ch.track_id)?, rate),
        ego_speed: ev,
        challenger_speed: cv,
        pet,
        participants: scn.participants.len(),
    })
}

/// Empirical distribution: equally weighted observed values, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMarginal {
    pub values: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { values }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }

    pub fn median(&self) -> f64 {
        quantile_sorted(&self.values, 0.5)
    }

    /// Inverse of the empirical CDF at `u` in [0, 1).
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let n = self.values.len();
        let i = ((u * n as f64).floor() as usize).min(n - 1);
        self.values[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalScenario {
    pub functional_type: FunctionalType,
    /// One parameter vector per contributing concrete scenario.
    pub table: Vec<ScenarioParameters>,
    /// Marginal per name in [`PARAMETER_NAMES`].
    pub marginals: BTreeMap<String, EmpiricalMarginal>,
}

/// Builds the logical scenario of a functional type from parameter vectors.
pub fn fit_logical_from(functional_type: FunctionalType, table: Vec<ScenarioParameters>) -> Result<LogicalScenario> {
    if table.is_empty() {
        return Err(Error::NotFound(format!("no scenarios of type {functional_type}")));
    }
    let marginals = PARAMETER_NAMES
        .iter()
        .map(|n| (n.to_string(), EmpiricalMarginal::new(table.iter().map(|p| p.get(n).unwrap()).collect())))
        .collect();
    Ok(LogicalScenario {
        functional_type,
        table,
        marginals,
    })
}

/// Logical scenario over every stored scenario of `functional_type` with a PET.
pub fn fit_logical(functional_type: &FunctionalType, db: &ScenarioDb) -> Result<LogicalScenario> {
    let q = Query {
        functional_type: Some(functional_type.clone()),
        ..Default::default()
    };
    let mut table = Vec::new();
    for id in db.query(&q) {
        if let Some(p) = scenario_parameters(&db.load(&id)?.scenario) {
            table.push(p);
        }
    }
    fit_logical_from(functional_type.clone(), table)
}

/// Draws `n` parameter vectors, each parameter independently by inverse
/// transform of its marginal. Deterministic per seed.
pub fn sample_concrete(logical: &LogicalScenario, n: usize, seed: u64) -> Vec<ScenarioParameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = |name: &str| &logical.marginals[name];
    (0..n)
        .map(|_| {
            let mut draw = |name: &str| m(name).inverse_cdf(rng.gen::<f64>());
            ScenarioParameters {
                ego_distance: draw("ego_distance"),
                challenger_distance: draw("challenger_distance"),
                ego_speed: draw("ego_speed"),
                challenger_speed: draw("challenger_speed"),
                pet: draw("pet"),
                participants: draw("participants") as usize,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// XML export

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Minimal OpenSCENARIO-flavored document: one entity per participant and a
/// polyline trajectory (time, position, heading per vertex) for each.
pub fn to_openscenario_xml(rec: &ScenarioRecord) -> String {
    use std::fmt::Write;
    let scn = &rec.scenario;
    let t0 = scn.core.frame_window.0;
    let mut x = String::new();
    let _ = writeln!(x, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(x, "<OpenSCENARIO>");
    let _ = writeln!(
        x,
        r#"  <FileHeader revMajor="1" revMinor="0" description="{} ego {} vs {} ({})" author="{}"/>"#,
        xml_escape(&scn.core.functional_type.to_string()),
        scn.core.ego_track_id,
        scn.core.challenger_track_id,
        rec.provenance.source,
        xml_escape(&rec.provenance.pipeline_version)
    );
    let _ = writeln!(x, r#"  <RoadNetwork><LogicFile filepath="{}"/></RoadNetwork>"#, xml_escape(&scn.traffic_space_id));
    let _ = writeln!(x, "  <Entities>");
    for t in &scn.participants {
        let _ = writeln!(
            x,
            r#"    <ScenarioObject name="agent{}"><Object kind="{}" width="{}" length="{}"/></ScenarioObject>"#,
            t.track_id,
            t.kind,
            t.width,
            t.length
        );
    }
    let _ = writeln!(x, "  </Entities>");
    let _ = writeln!(x, "  <Storyboard><Story name=\"replay\"><Act name=\"act\">");
    for t in &scn.participants {
        let _ = writeln!(x, r#"    <ManeuverGroup name="agent{0}"><Actors><EntityRef entityRef="agent{0}"/></Actors>"#, t.track_id);
        let _ = writeln!(x, r#"      <FollowTrajectoryAction><Trajectory name="track{}" closed="false"><Shape><Polyline>"#, t.track_id);
        for s in &t.samples {
            let _ = writeln!(
                x,
                r#"        <Vertex time="{}"><Position><WorldPosition x="{}" y="{}" h="{}"/></Position></Vertex>"#,
                (s.frame - t0) as f64 / scn.frame_rate,
                s.position.x,
                s.position.y,
                s.heading
            );
        }
        let _ = writeln!(x, "      </Polyline></Shape></Trajectory></FollowTrajectoryAction>");
        let _ = writeln!(x, "    </ManeuverGroup>");
    }
    let _ = writeln!(x, "  </Act></Story></Storyboard>");
    let _ = writeln!(x, "</OpenSCENARIO>");
    x
}
