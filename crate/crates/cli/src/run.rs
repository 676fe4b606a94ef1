//! Output directory of one run and the provenance stamp of its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use crossroads::PIPELINE_VERSION;

use crate::config::RunConfig;

/// `<output>/<run-id>/{scenarios, logs, reports, config.snapshot}`.
pub struct RunDir {
    pub root: PathBuf,
    pub config_hash: String,
}

impl RunDir {
    /// Creates the directory tree and writes the config snapshot. The run id
    /// is `run.id` when set, otherwise a UTC timestamp plus the config hash.
    pub fn create(cfg: &RunConfig) -> anyhow::Result<Self> {
        let hash = cfg.hash();
        let id = match cfg.opt_str("run.id") {
            Some(id) => id.to_string(),
            None => format!("{}-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"), &hash[..8]),
        };
        let root = Path::new(cfg.str("paths.output")).join(id);
        for sub in ["scenarios", "logs", "reports"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).with_context(|| format!("cannot create output directory {}", d.display()))?;
        }
        let run = Self { root, config_hash: hash };
        run.write("config.snapshot", &cfg.snapshot())?;
        Ok(run)
    }

    /// Comment line that opens every CSV artifact.
    pub fn stamp(&self) -> String {
        format!("{PIPELINE_VERSION} config={}", self.config_hash)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, rel: &str, content: &str) -> anyhow::Result<PathBuf> {
        let p = self.path(rel);
        fs::write(&p, content).with_context(|| format!("cannot write {}", p.display()))?;
        log::info!("wrote {}", p.display());
        Ok(p)
    }

    /// Writes a CSV body preceded by the stamp comment.
    pub fn write_csv(&self, rel: &str, body: &str) -> anyhow::Result<PathBuf> {
        self.write(rel, &format!("# {}\n{body}", self.stamp()))
    }

    /// Runs a module CSV writer that takes a header comment.
    pub fn write_with<F>(&self, rel: &str, f: F) -> anyhow::Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>, &str) -> crossroads::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf, &self.stamp())?;
        self.write(rel, &String::from_utf8(buf).context("artifact is not UTF-8")?)
    }

    /// Pretty JSON with `pipeline_version` and `config_hash` added at the top level.
    pub fn write_json(&self, rel: &str, value: serde_json::Value) -> anyhow::Result<PathBuf> {
        let mut doc = serde_json::Map::new();
        doc.insert("pipeline_version".into(), PIPELINE_VERSION.into());
        doc.insert("config_hash".into(), self.config_hash.clone().into());
        match value {
            serde_json::Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("data".into(), other);
            }
        }
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))?;
        self.write(rel, &(text + "\n"))
    }
}
