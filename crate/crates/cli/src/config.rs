//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crossroads::simcore::{BehaviorParams, PEDESTRIAN_FIELDS, VEHICLE_FIELDS};
use crossroads::trajdata::AgentKind;
use sha2::{Digest, Sha256};

/// Error in the configuration itself (exit code 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

/// Every fixed key with its default.
const DEFAULTS: &[(&str, &str)] = &[
    ("paths.data", "data/planted"),
    ("paths.map", "data/four_way.json"),
    ("paths.output", "out"),
    ("paths.params", ""),
    ("paths.scenarios", ""),
    ("run.id", ""),
    ("seed", "0"),
    ("filter.min_path_length", "1.0"),
    ("labeling.endpoint_window", "5"),
    ("labeling.max_assign_distance", "10.0"),
    ("extract.roi_radius", "15.0"),
    ("extract.pet_threshold", "6.5"),
    ("extract.critical_pet", "1.5"),
    ("extract.lead_margin", "1.0"),
    ("extract.tail_margin", "1.0"),
    ("extract.path_spacing", "0.5"),
    ("extract.keep_unmeasured", "false"),
    ("extract.export_xml", "false"),
    ("sim.dt", "0.02"),
    ("sim.duration", "60.0"),
    ("sim.integrator", "heun"),
    ("sim.log_every", "2"),
    ("sim.flows", "car:W>E:600; car:E>W:600; car:S>N:300; car:N>S:300; car:S>W:150; bicycle:W>E:120; pedestrian:NE>NW:200; pedestrian:SW>SE:200"),
    ("sim.lateral_sigma", "0.25"),
    ("sim.speed_sigma", "0.1"),
    ("sim.terms.curve", "true"),
    ("sim.terms.following", "true"),
    ("sim.terms.priority", "true"),
    ("sim.terms.crosswalk", "true"),
    ("sim.terms.vru_shy", "true"),
    ("sim.terms.boundary", "true"),
    ("ga.population", "50"),
    ("ga.generations", "100"),
    ("ga.tournament", "3"),
    ("ga.crossover_rate", "0.9"),
    ("ga.mutation_rate", "0.1"),
    ("ga.mutation_sigma", "0.1"),
    ("ga.elitism", "2"),
    ("calibrate.params", "car.desired_speed:6:16, car.relaxation_time:0.5:3, car.yield_gap:0.5:3"),
    ("calibrate.metric", "position"),
    ("calibrate.collision_weight", "10.0"),
    ("replay.scenario", ""),
    ("replay.policy", "ramp"),
    ("replay.threshold", "1.5"),
    ("replay.position_weight", "1.0"),
    ("replay.heading_weight", "0.0"),
    ("replay.speed_weight", "0.0"),
    ("replay.ramp_delay", "0.4"),
    ("replay.ramp_rate", "1.0"),
    ("replay.ramp_max", "2.0"),
    ("replay.rewind", "2.0"),
    ("replay.variations", "10"),
    ("replay.audit", "true"),
    ("sample.functional_type", ""),
    ("sample.count", "100"),
];

/// Keys that only say where things go; they do not affect artifact content
/// and are left out of the config hash.
const UNHASHED: &[&str] = &["paths.output", "run.id"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn is_known(key: &str) -> bool {
    if DEFAULTS.iter().any(|(k, _)| *k == key) {
        return true;
    }
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        ["params", "pedestrian", f] => PEDESTRIAN_FIELDS.contains(f),
        ["params", "car" | "truck" | "bicycle", f] => VEHICLE_FIELDS.contains(f),
        ["filter", "max_speed" | "min_lifetime_frames", kind] => AgentKind::from_str(kind).is_ok(),
        _ => false,
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep their defaults.
    pub fn parse(text: &str) -> ConfigResult<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`, got `{}`", i + 1, raw.trim())))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> ConfigResult<()> {
        if !is_known(key) {
            return Err(ConfigError(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> ConfigResult<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override `{kv}` must look like key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// `None` when the key is empty.
    pub fn opt_str(&self, key: &str) -> Option<&str> {
        Some(self.str(key)).filter(|s| !s.is_empty())
    }

    pub fn required(&self, key: &str) -> ConfigResult<&str> {
        self.opt_str(key).ok_or_else(|| ConfigError(format!("`{key}` must be set")))
    }

    fn typed<T: FromStr>(&self, key: &str, expected: &str) -> ConfigResult<T> {
        let raw = self.str(key);
        raw.parse()
            .map_err(|_| ConfigError(format!("`{key}`: expected {expected}, got `{raw}`")))
    }

    pub fn f64(&self, key: &str) -> ConfigResult<f64> {
        let v: f64 = self.typed(key, "a number")?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ConfigError(format!("`{key}`: expected a finite number, got `{}`", self.str(key))))
        }
    }

    pub fn usize(&self, key: &str) -> ConfigResult<usize> {
        self.typed(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> ConfigResult<u64> {
        self.typed(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> ConfigResult<bool> {
        self.typed(key, "true or false")
    }

    /// Keys below `prefix.` with their values, prefix stripped.
    pub fn section(&self, prefix: &str) -> impl Iterator<Item = (&str, &str)> {
        let p = format!("{prefix}.");
        self.values
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(&p).map(|rest| (rest, v.as_str())))
    }

    /// Checks every key against the type of its default; `params.*` and
    /// `filter.max_speed.*` are numbers, `filter.min_lifetime_frames.*` integers.
    pub fn check(&self) -> ConfigResult<()> {
        for key in self.values.keys() {
            let default = DEFAULTS.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
            match default {
                Some(d) if d.parse::<bool>().is_ok() => self.bool(key).map(drop)?,
                Some(d) if d.parse::<u64>().is_ok() => self.u64(key).map(drop)?,
                Some(d) if d.parse::<f64>().is_ok() => self.f64(key).map(drop)?,
                Some(_) => {}
                None if key.starts_with("filter.min_lifetime_frames.") => self.u64(key).map(drop)?,
                None => self.f64(key).map(drop)?,
            }
        }
        Ok(())
    }

    /// Effective configuration, one sorted `key = value` line per key.
    pub fn snapshot(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hash of every content-relevant key.
    pub fn hash(&self) -> String {
        let text: String = self
            .values
            .iter()
            .filter(|(k, _)| !UNHASHED.contains(&k.as_str()))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    /// Behavior parameters: the file at `paths.params` (or defaults) with
    /// `params.*` overrides applied.
    pub fn behavior_params(&self) -> anyhow::Result<BehaviorParams> {
        let mut p = match self.opt_str("paths.params") {
            Some(path) => load_params(Path::new(path))?,
            None => BehaviorParams::default(),
        };
        for (key, _) in self.section("params") {
            let v = self.f64(&format!("params.{key}"))?;
            p.set(key, v).map_err(|e| ConfigError(format!("`params.{key}`: {e}")))?;
        }
        p.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(p)
    }
}

/// Reads behavior parameters from a JSON file, either bare or wrapped in a
/// calibration report under `params`.
pub fn load_params(path: &Path) -> anyhow::Result<BehaviorParams> {
    let text = std::fs::read_to_string(path).map_err(|e| crossroads::Error::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(crossroads::Error::from)?;
    let inner = v.get("params").cloned().unwrap_or(v);
    Ok(serde_json::from_value(inner).map_err(crossroads::Error::from)?)
}
