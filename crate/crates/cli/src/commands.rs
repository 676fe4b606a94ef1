//! Subcommand pipelines.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::Context;
use crossroads::calibrate::{calibrate, FitnessConfig, GaConfig, Metric, ParamSpec};
use crossroads::extraction::stats::{pet_stats, write_stats_csv};
use crossroads::extraction::{extract_all, ConcreteScenario, ExtractionConfig, ExtractionOutput, FunctionalType, ScenarioCategory};
use crossroads::maneuvers::{label_recording, LabelTable, LabelingConfig};
use crossroads::preprocess::{filter_tracks, FilterReport, FilterRules};
use crossroads::replay::{
    aggressive_ranges, audit_false_positive, rewind_and_vary, run_adaptive, sampled_variations, BaselinePolicy, DissimilarityConfig, EgoPolicy,
    LateralRampPolicy, ReplayConfig, ReplayInputs, SelfReplayPolicy,
};
use crossroads::scenariodb::{fit_logical, sample_concrete, to_openscenario_xml, Provenance, ScenarioDb, ScenarioRecord, Source, PARAMETER_NAMES};
use crossroads::simcore::{generate_spawns, run_scenario, FlowSpec, ForceTerms, Integrator, ReplayClock, SimConfig, SpawnSpec, World};
use crossroads::synth;
use crossroads::trajdata::{load_recording_dir, load_traffic_space, write_recording, AgentKind, Compass, Recording, TrafficSpace};
use crossroads::PIPELINE_VERSION;
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::run::RunDir;

const CATEGORIES: [ScenarioCategory; 3] = [ScenarioCategory::V2v, ScenarioCategory::V2p, ScenarioCategory::V2b];

// ---------------------------------------------------------------------------
// Config → module settings

fn filter_rules(cfg: &RunConfig, frame_rate: f64) -> anyhow::Result<FilterRules> {
    let mut r = FilterRules::defaults(frame_rate);
    r.min_path_length = cfg.f64("filter.min_path_length")?;
    for (key, _) in cfg.section("filter") {
        let full = format!("filter.{key}");
        if let Some(kind) = key.strip_prefix("max_speed.") {
            r.max_speed_by_kind.insert(AgentKind::from_str(kind)?, cfg.f64(&full)?);
        } else if let Some(kind) = key.strip_prefix("min_lifetime_frames.") {
            let frames: u32 = cfg.u64(&full)?.try_into().map_err(|_| ConfigError(format!("`{full}` is too large")))?;
            r.min_lifetime_frames_by_kind.insert(AgentKind::from_str(kind)?, frames);
        }
    }
    r.validate()?;
    Ok(r)
}

fn labeling_config(cfg: &RunConfig) -> anyhow::Result<LabelingConfig> {
    let c = LabelingConfig {
        endpoint_window: cfg.usize("labeling.endpoint_window")?,
        max_assign_distance: cfg.f64("labeling.max_assign_distance")?,
        ..LabelingConfig::default()
    };
    c.validate()?;
    Ok(c)
}

fn extraction_config(cfg: &RunConfig) -> anyhow::Result<ExtractionConfig> {
    let c = ExtractionConfig {
        roi_radius: cfg.f64("extract.roi_radius")?,
        pet_threshold: cfg.f64("extract.pet_threshold")?,
        critical_pet: cfg.f64("extract.critical_pet")?,
        lead_margin: cfg.f64("extract.lead_margin")?,
        tail_margin: cfg.f64("extract.tail_margin")?,
        path_spacing: cfg.f64("extract.path_spacing")?,
        keep_unmeasured: cfg.bool("extract.keep_unmeasured")?,
        ..ExtractionConfig::default()
    };
    c.validate()?;
    Ok(c)
}

fn sim_config(cfg: &RunConfig) -> anyhow::Result<SimConfig> {
    let integrator = Integrator::from_str(cfg.str("sim.integrator"))
        .map_err(|_| ConfigError(format!("`sim.integrator`: expected euler or heun, got `{}`", cfg.str("sim.integrator"))))?;
    let c = SimConfig {
        dt: cfg.f64("sim.dt")?,
        duration: cfg.f64("sim.duration")?,
        seed: cfg.u64("seed")?,
        integrator,
        terms: ForceTerms {
            curve: cfg.bool("sim.terms.curve")?,
            following: cfg.bool("sim.terms.following")?,
            priority: cfg.bool("sim.terms.priority")?,
            crosswalk: cfg.bool("sim.terms.crosswalk")?,
            vru_shy: cfg.bool("sim.terms.vru_shy")?,
            boundary: cfg.bool("sim.terms.boundary")?,
        },
        log_every: cfg.usize("sim.log_every")?,
    };
    c.validate()?;
    Ok(c)
}

/// Parses `kind:ENTRY>EXIT:rate_per_hour` items separated by `;`.
fn parse_flows(text: &str, duration: f64) -> Result<Vec<FlowSpec>, ConfigError> {
    let bad = |item: &str| ConfigError(format!("`sim.flows`: expected kind:ENTRY>EXIT:rate, got `{item}`"));
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            let [kind, route, rate] = parts.as_slice() else { return Err(bad(item)) };
            let (entry, exit) = route.split_once('>').ok_or_else(|| bad(item))?;
            Ok(FlowSpec {
                kind: AgentKind::from_str(kind).map_err(|_| bad(item))?,
                entry: Compass::from_str(entry.trim()).map_err(|_| bad(item))?,
                exit: Compass::from_str(exit.trim()).map_err(|_| bad(item))?,
                rate_per_hour: rate.parse().map_err(|_| bad(item))?,
                start: 0.0,
                end: duration,
            })
        })
        .collect()
}

/// Parses `group.field:lower:upper` items separated by `,`.
fn parse_param_spec(text: &str) -> anyhow::Result<ParamSpec<f64>> {
    let bad = |item: &str| ConfigError(format!("`calibrate.params`: expected group.field:lower:upper, got `{item}`"));
    let genes = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            let [name, lo, hi] = parts.as_slice() else { return Err(bad(item)) };
            Ok((name.to_string(), lo.parse().map_err(|_| bad(item))?, hi.parse().map_err(|_| bad(item))?))
        })
        .collect::<Result<Vec<(String, f64, f64)>, ConfigError>>()?;
    ParamSpec::new(genes).map_err(|e| ConfigError(format!("`calibrate.params`: {e}")).into())
}

fn ga_config(cfg: &RunConfig) -> anyhow::Result<GaConfig> {
    let c = GaConfig {
        population: cfg.usize("ga.population")?,
        generations: cfg.usize("ga.generations")?,
        tournament: cfg.usize("ga.tournament")?,
        crossover_rate: cfg.f64("ga.crossover_rate")?,
        mutation_rate: cfg.f64("ga.mutation_rate")?,
        mutation_sigma: cfg.f64("ga.mutation_sigma")?,
        elitism: cfg.usize("ga.elitism")?,
        seed: cfg.u64("seed")?,
    };
    c.validate()?;
    Ok(c)
}

fn parse_functional_type(text: &str) -> Result<FunctionalType, ConfigError> {
    let (cat, name) = text
        .split_once(':')
        .ok_or_else(|| ConfigError(format!("`sample.functional_type`: expected category:name, got `{text}`")))?;
    let category = ScenarioCategory::from_str(cat).map_err(|e| ConfigError(format!("`sample.functional_type`: {e}")))?;
    Ok(FunctionalType::new(category, name))
}

// ---------------------------------------------------------------------------
// Shared pipeline

fn load_space(cfg: &RunConfig) -> anyhow::Result<Arc<TrafficSpace>> {
    let path = cfg.required("paths.map")?;
    let space = load_traffic_space(Path::new(path)).with_context(|| format!("cannot load the traffic space given by `paths.map` ({path})"))?;
    Ok(Arc::new(space))
}

fn load_data(cfg: &RunConfig) -> anyhow::Result<Recording> {
    let path = cfg.required("paths.data")?;
    load_recording_dir(Path::new(path)).with_context(|| format!("cannot load the recording given by `paths.data` ({path})"))
}

struct Extracted {
    space: Arc<TrafficSpace>,
    recording: Recording,
    filter: FilterReport,
    labels: LabelTable,
    output: ExtractionOutput,
    ecfg: ExtractionConfig,
}

fn run_extraction(cfg: &RunConfig) -> anyhow::Result<Extracted> {
    let space = load_space(cfg)?;
    let raw = load_data(cfg)?;
    let rules = filter_rules(cfg, raw.frame_rate)?;
    let lcfg = labeling_config(cfg)?;
    let ecfg = extraction_config(cfg)?;
    let (recording, filter) = filter_tracks(&raw, &rules);
    log::info!("filter kept {} of {} tracks", filter.kept.len(), raw.tracks.len());
    let labels = label_recording(&recording, &space, &lcfg)?;
    let output = extract_all(&recording, &labels, &ecfg);
    log::info!("extracted {} scenarios from {} candidates", output.scenarios.len(), output.candidates.len());
    Ok(Extracted {
        space,
        recording,
        filter,
        labels,
        output,
        ecfg,
    })
}

fn all_types(ecfg: &ExtractionConfig) -> Vec<FunctionalType> {
    CATEGORIES.iter().flat_map(|c| ecfg.taxonomy.type_names(*c)).collect()
}

fn write_pet_stats(run: &RunDir, rel: &str, scenarios: &[ConcreteScenario], ecfg: &ExtractionConfig) -> anyhow::Result<()> {
    let rows = pet_stats(scenarios, &all_types(ecfg));
    run.write_with(rel, |w, stamp| write_stats_csv(&rows, w, Some(stamp)))?;
    Ok(())
}

fn candidates_csv(out: &ExtractionOutput) -> String {
    let mut s = String::from("ego,challenger,category,functional_type,has_conflict_area,pet,retained\n");
    for c in &out.candidates {
        let pet = c.pet.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{pet},{}",
            c.ego_track_id, c.challenger_track_id, c.category, c.functional_type, c.has_conflict_area, c.retained
        );
    }
    s
}

/// Stores scenarios in the run's database; returns their ids in input order.
fn store_scenarios(run: &RunDir, scenarios: &[ConcreteScenario], source: Source, xml: bool) -> anyhow::Result<Vec<String>> {
    let mut db = ScenarioDb::open(&run.root)?;
    let mut ids = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let rec = ScenarioRecord {
            scenario: s.clone(),
            provenance: Provenance {
                source,
                pipeline_version: PIPELINE_VERSION.to_string(),
                config_hash: run.config_hash.clone(),
            },
        };
        let id = db.store(&rec)?;
        if xml {
            run.write(&format!("scenarios/{id}.xosc"), &to_openscenario_xml(&rec))?;
        }
        ids.push(id);
    }
    Ok(ids)
}

// ---------------------------------------------------------------------------
// Subcommands

pub fn extract(cfg: &RunConfig) -> anyhow::Result<RunDir> {
    let ex = run_extraction(cfg)?;
    let run = RunDir::create(cfg)?;
    run.write_with("reports/filter_report.csv", |w, stamp| ex.filter.write_csv(w, Some(stamp)))?;
    run.write_with("reports/labels.csv", |w, stamp| ex.labels.write_csv(w, Some(stamp)))?;
    run.write_csv("reports/candidates.csv", &candidates_csv(&ex.output))?;
    write_pet_stats(&run, "reports/pet_stats.csv", &ex.output.scenarios, &ex.ecfg)?;
    let ids = store_scenarios(&run, &ex.output.scenarios, Source::Real, cfg.bool("extract.export_xml")?)?;
    let mut per_category = serde_json::Map::new();
    for c in CATEGORIES {
        let n = ex.output.scenarios.iter().filter(|s| s.core.category == c).count();
        per_category.insert(c.to_string(), n.into());
    }
    run.write_json(
        "reports/extract_summary.json",
        json!({
            "recording_id": ex.recording.recording_id,
            "tracks_kept": ex.filter.kept.len(),
            "tracks_removed": ex.filter.removed.len(),
            "irregular_labels": ex.labels.irregular().count(),
            "candidates": ex.output.candidates.len(),
            "scenarios": ids.len(),
            "critical": ex.output.scenarios.iter().filter(|s| s.core.critical).count(),
            "per_category": per_category,
            "scenario_ids": ids,
        }),
    )?;
    Ok(run)
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<RunDir> {
    let space = load_space(cfg)?;
    let params = cfg.behavior_params()?;
    let sim = sim_config(cfg)?;
    let spec = SpawnSpec {
        flows: parse_flows(cfg.str("sim.flows"), sim.duration)?,
        lateral_sigma: cfg.f64("sim.lateral_sigma")?,
        speed_sigma: cfg.f64("sim.speed_sigma")?,
    };
    // one log frame per `log_every` steps, numbered consecutively
    let frame_rate = 1.0 / (sim.dt * sim.log_every as f64);
    let mut world = World::new(space.clone(), params).with_clock(ReplayClock {
        frame0: 0,
        frame_rate,
        substeps: sim.log_every,
    });
    world.pending = generate_spawns(&space, &world.params, &spec, sim.seed)?;
    let spawns = world.pending.len();
    let (log, world) = run_scenario(world, &sim)?;

    let run = RunDir::create(cfg)?;
    run.write_csv("logs/sim_log.csv", &log.to_csv_string())?;

    let recording = log.to_recording(0, "simulated", &|_, kind| synth::dimensions(kind));
    let labels = label_recording(&recording, &space, &labeling_config(cfg)?)?;
    let ecfg = extraction_config(cfg)?;
    let out = extract_all(&recording, &labels, &ecfg);
    let ids = store_scenarios(&run, &out.scenarios, Source::Synthetic, cfg.bool("extract.export_xml")?)?;
    write_pet_stats(&run, "reports/pet_stats.csv", &out.scenarios, &ecfg)?;
    run.write_json(
        "reports/simulate_summary.json",
        json!({
            "steps": sim.steps(),
            "frame_rate": frame_rate,
            "scheduled_spawns": spawns,
            "spawned_agents": log.agent_ids().len(),
            "unspawned": world.pending.len(),
            "collisions": log.collisions,
            "scenarios": ids.len(),
            "scenario_ids": ids,
        }),
    )?;
    Ok(run)
}

pub fn calibrate_cmd(cfg: &RunConfig) -> anyhow::Result<RunDir> {
    let space = load_space(cfg)?;
    let raw = load_data(cfg)?;
    let (recording, _) = filter_tracks(&raw, &filter_rules(cfg, raw.frame_rate)?);
    let labels = label_recording(&recording, &space, &labeling_config(cfg)?)?;
    let base = cfg.behavior_params()?;
    let spec = parse_param_spec(cfg.str("calibrate.params"))?;
    let ga = ga_config(cfg)?;
    let fit = FitnessConfig {
        sim: sim_config(cfg)?,
        metric: Metric::from_str(cfg.str("calibrate.metric"))?,
        collision_weight: cfg.f64("calibrate.collision_weight")?,
    };
    let result = calibrate(&base, &spec, &ga, &recording, &labels, &space, &fit)?;

    let run = RunDir::create(cfg)?;
    run.write_csv("reports/ga_history.csv", &result.ga.history_csv())?;
    let genes: serde_json::Map<String, serde_json::Value> = spec
        .genes
        .iter()
        .zip(&result.ga.best)
        .map(|(g, v)| (g.name.clone(), json!(v)))
        .collect();
    run.write_json(
        "reports/best_params.json",
        json!({
            "params": result.params,
            "genes": genes,
            "best_fitness": result.ga.best_fitness,
            "evaluations": result.ga.evaluations,
            "report": result.report,
        }),
    )?;
    Ok(run)
}

#[derive(Clone)]
enum PolicyKind {
    Baseline,
    SelfReplay,
    Ramp { start_frame: i64, rate: f64, max_offset: f64 },
}

fn make_policy(kind: &PolicyKind, ego: &Arc<crossroads::trajdata::Track>, frame_rate: f64) -> Box<dyn EgoPolicy> {
    match kind {
        PolicyKind::Baseline => Box::new(BaselinePolicy::cautious()),
        PolicyKind::SelfReplay => Box::new(SelfReplayPolicy { track: ego.clone() }),
        PolicyKind::Ramp {
            start_frame,
            rate,
            max_offset,
        } => Box::new(LateralRampPolicy {
            track: ego.clone(),
            frame_rate,
            start_frame: *start_frame,
            rate: *rate,
            max_offset: *max_offset,
        }),
    }
}

/// The configured `ego:challenger` pair, or the first scenario with a car ego.
fn pick_scenario(cfg: &RunConfig, scenarios: &[ConcreteScenario]) -> anyhow::Result<ConcreteScenario> {
    if let Some(pair) = cfg.opt_str("replay.scenario") {
        let bad = || ConfigError(format!("`replay.scenario`: expected ego:challenger track ids, got `{pair}`"));
        let (e, c) = pair.split_once(':').ok_or_else(bad)?;
        let (e, c): (i64, i64) = (e.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?);
        return scenarios
            .iter()
            .find(|s| s.core.ego_track_id == e && s.core.challenger_track_id == c)
            .cloned()
            .ok_or_else(|| crossroads::Error::NotFound(format!("scenario {e}:{c} among the extracted scenarios")).into());
    }
    let mut cands: Vec<&ConcreteScenario> = scenarios
        .iter()
        .filter(|s| s.participant(s.core.ego_track_id).is_some_and(|t| t.kind == AgentKind::Car))
        .collect();
    cands.sort_by_key(|s| (s.core.ego_track_id, s.core.challenger_track_id));
    cands
        .first()
        .map(|s| (*s).clone())
        .ok_or_else(|| crossroads::Error::NotFound("a scenario with a car ego to replay".into()).into())
}

pub fn replay(cfg: &RunConfig) -> anyhow::Result<RunDir> {
    let ex = run_extraction(cfg)?;
    let scenario = pick_scenario(cfg, &ex.output.scenarios)?;
    let frame_rate = scenario.frame_rate;
    let ego = Arc::new(scenario.participant(scenario.core.ego_track_id).cloned().expect("core participant"));
    let kind = match cfg.str("replay.policy") {
        "baseline" => PolicyKind::Baseline,
        "self" => PolicyKind::SelfReplay,
        "ramp" => PolicyKind::Ramp {
            start_frame: scenario.core.frame_window.0 + (cfg.f64("replay.ramp_delay")? * frame_rate).round() as i64,
            rate: cfg.f64("replay.ramp_rate")?,
            max_offset: cfg.f64("replay.ramp_max")?,
        },
        other => return Err(ConfigError(format!("`replay.policy`: expected baseline, self or ramp, got `{other}`")).into()),
    };
    let params = cfg.behavior_params()?;
    let inputs = ReplayInputs::new(
        scenario,
        ex.labels.clone(),
        ex.space.clone(),
        params.clone(),
        ReplayConfig {
            sim: sim_config(cfg)?,
            dissimilarity: DissimilarityConfig {
                position_weight: cfg.f64("replay.position_weight")?,
                heading_weight: cfg.f64("replay.heading_weight")?,
                speed_weight: cfg.f64("replay.speed_weight")?,
                threshold: cfg.f64("replay.threshold")?,
            },
            path_spacing: ex.ecfg.path_spacing,
        },
    );
    let factory = |k: PolicyKind, ego: Arc<crossroads::trajdata::Track>| move || make_policy(&k, &ego, frame_rate);
    let factory = factory(kind.clone(), ego.clone());
    let mut policy = factory();
    let mut session = run_adaptive(&inputs, policy.as_mut())?;
    let rewind = cfg.f64("replay.rewind")?;

    let run = RunDir::create(cfg)?;
    run.write_csv("logs/session.csv", &session.log_csv_string())?;
    let mut report = serde_json::Map::new();
    if session.trigger.is_some() {
        let n = cfg.usize("replay.variations")?;
        if n > 0 {
            let variations = sampled_variations(&aggressive_ranges(&params), n, cfg.u64("seed")?);
            let runs = rewind_and_vary(&inputs, &session, &factory, rewind, &variations)?;
            let mut summaries = Vec::new();
            for (i, r) in runs.iter().enumerate() {
                run.write_csv(&format!("logs/variation_{i:03}.csv"), &r.log_csv_string())?;
                summaries.push(json!({ "overrides": variations[i].overrides, "summary": r.summary() }));
            }
            let min_pet = runs.iter().filter_map(|r| r.pet).fold(f64::INFINITY, f64::min);
            report.insert("variations".into(), summaries.into());
            report.insert("variation_min_pet".into(), if min_pet.is_finite() { json!(min_pet) } else { json!(null) });
        }
        if cfg.bool("replay.audit")? {
            let rerun = audit_false_positive(&inputs, &mut session, &factory, rewind, ex.ecfg.critical_pet)?;
            run.write_csv("logs/audit.csv", &rerun.log_csv_string())?;
            report.insert("audit".into(), json!(rerun.summary()));
        }
    }
    report.insert("session".into(), json!(session.summary()));
    report.insert("scenario_pet".into(), json!(inputs.scenario.core.pet.pet));
    report.insert("functional_type".into(), json!(inputs.scenario.core.functional_type.to_string()));
    run.write_json("reports/replay_summary.json", serde_json::Value::Object(report))?;
    Ok(run)
}

/// Scenarios from the database at `paths.scenarios`, or freshly extracted.
fn scenario_source(cfg: &RunConfig) -> anyhow::Result<(Vec<ConcreteScenario>, ExtractionConfig)> {
    let ecfg = extraction_config(cfg)?;
    match cfg.opt_str("paths.scenarios") {
        Some(dir) => {
            let db = open_existing_db(dir)?;
            let ids: Vec<String> = db.entries().map(|e| e.id.clone()).collect();
            let scenarios = ids.iter().map(|id| db.load(id).map(|r| r.scenario)).collect::<crossroads::Result<Vec<_>>>()?;
            Ok((scenarios, ecfg))
        }
        None => Ok((run_extraction(cfg)?.output.scenarios, ecfg)),
    }
}

fn open_existing_db(dir: &str) -> anyhow::Result<ScenarioDb> {
    if !Path::new(dir).join("index.json").exists() {
        return Err(crossroads::Error::NotFound(format!("scenario database at `paths.scenarios` ({dir})")).into());
    }
    Ok(ScenarioDb::open(Path::new(dir))?)
}

pub fn stats(cfg: &RunConfig) -> anyhow::Result<RunDir> {
    let (scenarios, ecfg) = scenario_source(cfg)?;
    let run = RunDir::create(cfg)?;
    write_pet_stats(&run, "reports/pet_stats.csv", &scenarios, &ecfg)?;
    Ok(run)
}

pub fn sample(cfg: &RunConfig) -> anyhow::Result<RunDir> {
    let ft = parse_functional_type(cfg.required("sample.functional_type")?)?;
    let count = cfg.usize("sample.count")?;
    let seed = cfg.u64("seed")?;
    let (run, logical) = match cfg.opt_str("paths.scenarios") {
        Some(dir) => {
            let logical = fit_logical(&ft, &open_existing_db(dir)?)?;
            (RunDir::create(cfg)?, logical)
        }
        None => {
            let ex = run_extraction(cfg)?;
            let run = RunDir::create(cfg)?;
            store_scenarios(&run, &ex.output.scenarios, Source::Real, false)?;
            let logical = fit_logical(&ft, &ScenarioDb::open(&run.root)?)?;
            (run, logical)
        }
    };
    let samples = sample_concrete(&logical, count, seed);
    run.write_json("reports/logical.json", json!({ "logical": logical }))?;
    let mut csv = PARAMETER_NAMES.join(",") + "\n";
    for s in &samples {
        let row: Vec<String> = PARAMETER_NAMES.iter().map(|n| s.get(n).expect("known parameter").to_string()).collect();
        csv += &(row.join(",") + "\n");
    }
    run.write_csv("reports/samples.csv", &csv)?;
    Ok(run)
}

/// Writes the bundled planted recording, its ground truth and the map.
pub fn synth_data(out: &Path) -> anyhow::Result<()> {
    let (rec, pairs) = synth::planted_recording();
    write_recording(&rec, &out.join("planted"))?;
    let mut truth = String::from("ego,challenger,category,decoy\n");
    for p in &pairs {
        let _ = writeln!(truth, "{},{},{},{}", p.ego_track_id, p.challenger_track_id, p.category, p.decoy);
    }
    let truth_path = out.join("planted").join("planted_pairs.csv");
    std::fs::write(&truth_path, truth).with_context(|| format!("cannot write {}", truth_path.display()))?;
    let map = serde_json::to_string_pretty(&synth::four_way_space().to_spec())?;
    let map_path = out.join("four_way.json");
    std::fs::write(&map_path, map + "\n").with_context(|| format!("cannot write {}", map_path.display()))?;
    Ok(())
}
