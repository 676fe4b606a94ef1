//! Calibration of behavior parameters against recorded trajectories.

pub mod fitness;
pub mod ga;

use std::sync::Arc;

use serde::Serialize;

pub use fitness::{routable_tracks, score_log, simulate_recording, substeps, trajectory_fitness, FitnessConfig, FitnessReport, LogScore, Metric};
pub use ga::{run_ga, run_ga_from, GaConfig, GaResult, Gene, GenerationStats, ParamSpec};

use crate::error::{Error, Result};
use crate::maneuvers::LabelTable;
use crate::simcore::BehaviorParams;
use crate::trajdata::{Recording, TrafficSpace};

/// Applies a gene vector to a copy of `base`; gene names are `group.field` keys.
pub fn apply_genes(base: &BehaviorParams, spec: &ParamSpec<f64>, genes: &[f64]) -> Result<BehaviorParams> {
    let mut p = base.clone();
    for (g, v) in spec.genes.iter().zip(genes) {
        p.set(&g.name, *v)?;
    }
    Ok(p)
}

/// Checks that every gene names a known parameter.
pub fn check_spec(base: &BehaviorParams, spec: &ParamSpec<f64>) -> Result<()> {
    spec.validate()?;
    for g in &spec.genes {
        if base.get(&g.name).is_none() {
            return Err(Error::Config(format!("unknown calibration parameter `{}`", g.name)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub ga: GaResult<f64>,
    pub params: BehaviorParams,
    pub report: FitnessReport,
}

/// Calibrates the parameters in `spec` against one recording. Parameter
/// vectors that fail validation or simulation score `+inf`.
pub fn calibrate(
    base: &BehaviorParams,
    spec: &ParamSpec<f64>,
    ga_cfg: &GaConfig,
    recording: &Recording,
    labels: &LabelTable,
    space: &Arc<TrafficSpace>,
    fit_cfg: &FitnessConfig,
) -> Result<CalibrationResult> {
    check_spec(base, spec)?;
    fit_cfg.sim.validate_for_data(recording.frame_rate)?;
    substeps(recording.frame_rate, fit_cfg.sim.dt)?;
    let ga = run_ga(spec, ga_cfg, |x: &[f64]| {
        apply_genes(base, spec, x)
            .and_then(|p| trajectory_fitness(&p, recording, labels, space, fit_cfg))
            .map_or(f64::INFINITY, |r| r.fitness)
    })?;
    let params = apply_genes(base, spec, &ga.best)?;
    let report = trajectory_fitness(&params, recording, labels, space, fit_cfg)?;
    Ok(CalibrationResult { ga, params, report })
}
