use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use morphomap_core::evalx::{self, ClassMetrics, ConfusionMatrix};
use morphomap_core::features::{extract_training_set, feature_index, write_samples_csv};
use morphomap_core::forest::{load_model, save_model, train_environment_forest};
use morphomap_core::ingest::{ingest_city, load_labeled_polygons, IngestSummary, OriginSpec};
use morphomap_core::mapgen::{self, classify_city};
use morphomap_core::pathloss::{self, LinkLoss, LinkQuery, PathLossParams, Situation, PLACEHOLDER_PARAMS_JSON};
use morphomap_core::synthcity::{self, SYNTH_ORIGIN};
use morphomap_core::{CityDataset, EnvironmentClass, LabeledPolygon, Point, SamplePoint, FEATURE_NAMES};

use crate::config::{require, PipelineConfig};

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn load_city(cfg: &PipelineConfig) -> Result<(CityDataset, IngestSummary)> {
    let buildings = require(&cfg.paths.buildings, "buildings")?;
    let roads = require(&cfg.paths.roads, "roads")?;
    Ok(ingest_city(buildings, roads, &cfg.projection)?)
}

fn load_labels(cfg: &PipelineConfig, city: &CityDataset) -> Result<Vec<LabeledPolygon>> {
    let labels = require(&cfg.paths.labels, "labels")?;
    Ok(load_labeled_polygons(labels, &city.projection)?)
}

fn training_samples(cfg: &PipelineConfig) -> Result<(CityDataset, Vec<SamplePoint>)> {
    let (city, _) = load_city(cfg)?;
    let labels = load_labels(cfg, &city)?;
    let samples = extract_training_set(&city, &labels, &cfg.grid)?;
    Ok((city, samples))
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestOutcome {
    pub summary: IngestSummary,
    pub dataset: PathBuf,
}

/// Loads and validates the inputs and writes the projected dataset as JSON.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<IngestOutcome> {
    let (city, summary) = load_city(cfg)?;
    if let Some(labels) = &cfg.paths.labels {
        let l = load_labeled_polygons(labels, &city.projection)?;
        info!("{} labelled polygons", l.len());
    }
    let dataset = cfg.output("dataset.json");
    write(&dataset, &serde_json::to_vec(&city)?)?;
    info!(
        "kept {} buildings ({} skipped), {} roads ({} skipped, {} other classes)",
        summary.buildings_kept,
        summary.buildings_skipped,
        summary.roads_kept,
        summary.roads_skipped,
        summary.roads_dropped_by_class
    );
    Ok(IngestOutcome { summary, dataset })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutcome {
    pub model: PathBuf,
    pub report: PathBuf,
    pub model_id: String,
    pub holdout: ConfusionMatrix,
    pub metrics: ClassMetrics,
    /// Feature name and importance, most important first.
    pub importances: Vec<(String, f64)>,
}

/// Extracts labelled samples, measures a hold-out split, then trains the
/// final model on every labelled sample and saves it with a report.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutcome> {
    let (_, samples) = training_samples(cfg)?;
    let ev = &cfg.evaluation;
    let (train, test) = evalx::split(&samples, ev.train_fraction, ev.split_seed, ev.stratified)?;
    info!("{} training and {} hold-out samples", train.len(), test.len());
    let holdout_model = train_environment_forest(&train, &cfg.forest)?;
    let holdout = evalx::evaluate(&holdout_model, &test)?;
    let metrics = evalx::metrics(&holdout)?;
    info!("hold-out accuracy {:.4}", metrics.accuracy);

    let model = train_environment_forest(&samples, &cfg.forest)?;
    let model_path = cfg.model_path();
    save_model(&model, &model_path)?;
    let model_id = mapgen::model_id(&model)?;

    let mut importances: Vec<(String, f64)> = model
        .feature_names()
        .iter()
        .cloned()
        .zip(model.importances().iter().copied())
        .collect();
    importances.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let class_counts: serde_json::Map<String, Value> = EnvironmentClass::TRAINING
        .iter()
        .map(|c| {
            let n = samples.iter().filter(|s| s.label == Some(*c)).count();
            (c.code().to_string(), json!(n))
        })
        .collect();
    let report = json!({
        "model_id": model_id,
        "samples": samples.len(),
        "class_counts": class_counts,
        "train_samples": train.len(),
        "holdout_samples": test.len(),
        "holdout": evalx::report_json(&holdout, &metrics),
        "importances": importances
            .iter()
            .map(|(f, v)| json!({"feature": f, "importance": v}))
            .collect::<Vec<_>>(),
        "forest": cfg.forest,
        "grid": cfg.grid,
    });
    let report_path = cfg.output("train_report.json");
    write(&report_path, &json_bytes(&report)?)?;
    write(&cfg.output("metrics.txt"), evalx::report_text(&holdout, &metrics).as_bytes())?;
    write_samples_csv(&cfg.output("samples.csv"), &samples)?;
    Ok(TrainOutcome {
        model: model_path,
        report: report_path,
        model_id,
        holdout,
        metrics,
        importances,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MapOutcome {
    pub geojson: PathBuf,
    pub svg: PathBuf,
    /// Cells per class in RES, ULR, UHR, OPEN order.
    pub counts: [usize; 4],
}

pub fn cmd_map(cfg: &PipelineConfig) -> Result<MapOutcome> {
    let model_path = cfg.model_path();
    let model = load_model(&model_path)?;
    let (city, _) = load_city(cfg)?;
    let map = classify_city(&city, &model, &cfg.grid)?;
    let geojson = cfg.output("map.geojson");
    let svg = cfg.output("map.svg");
    mapgen::emit_geojson(&map, &geojson)?;
    mapgen::emit_svg(&map, &svg, &cfg.palette)?;
    Ok(MapOutcome {
        geojson,
        svg,
        counts: map.class_counts(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryOutcome {
    pub csv: PathBuf,
    pub svg: PathBuf,
    /// Grid cells per class in RES, ULR, UHR order.
    pub counts: [usize; 3],
}

pub fn cmd_boundary(cfg: &PipelineConfig, fx: &str, fy: &str, resolution: Option<usize>) -> Result<BoundaryOutcome> {
    let ix = feature_index(fx).with_context(|| format!("unknown feature {fx:?}; expected one of {FEATURE_NAMES:?}"))?;
    let iy = feature_index(fy).with_context(|| format!("unknown feature {fy:?}; expected one of {FEATURE_NAMES:?}"))?;
    if ix == iy {
        bail!("decision boundary needs two different features, got {fx} twice");
    }
    let model = load_model(&cfg.model_path())?;
    let (_, samples) = training_samples(cfg)?;
    let res = resolution.unwrap_or(cfg.evaluation.boundary_resolution);
    let grid = evalx::decision_boundary(&samples, ix, iy, &cfg.forest, &model, res)?;
    let csv = cfg.output(&format!("boundary_{fx}_{fy}.csv"));
    let svg = cfg.output(&format!("boundary_{fx}_{fy}.svg"));
    evalx::write_boundary_csv(&grid, &csv)?;
    evalx::write_boundary_svg(&grid, &cfg.palette, &svg)?;
    let mut counts = [0; 3];
    for c in &grid.cells {
        counts[c.index().expect("training class")] += 1;
    }
    Ok(BoundaryOutcome { csv, svg, counts })
}

/// A link endpoint as given on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    LonLat(f64, f64),
    Planar(Point),
}

#[derive(Debug, Clone, Serialize)]
pub struct PathlossOutcome {
    #[serde(flatten)]
    pub link: LinkLoss,
    pub frequency_ghz: f64,
    pub situation: Situation,
    pub placeholder_coefficients: bool,
}

pub fn cmd_pathloss(
    cfg: &PipelineConfig,
    map_path: Option<&Path>,
    tx: Endpoint,
    rx: Endpoint,
    frequency_ghz: f64,
    situation: Situation,
) -> Result<PathlossOutcome> {
    let map_path = map_path.map_or_else(|| cfg.output("map.geojson"), Path::to_path_buf);
    let map = mapgen::read_geojson_map(&map_path)?;
    let params = match &cfg.paths.pathloss_params {
        Some(p) => PathLossParams::load(p)?,
        None => {
            warn!("no path-loss table configured; using PLACEHOLDER coefficients");
            PathLossParams::placeholder()
        }
    };
    let placeholder = params
        .note
        .as_deref()
        .is_some_and(|n| n.starts_with("PLACEHOLDER"));
    let to_planar = |e: Endpoint| -> Result<Point> {
        Ok(match e {
            Endpoint::LonLat(lon, lat) => map.projection.project(lon, lat)?,
            Endpoint::Planar(p) => p,
        })
    };
    let q = LinkQuery {
        tx: to_planar(tx)?,
        rx: to_planar(rx)?,
        frequency_ghz,
        situation,
    };
    let link = pathloss::link_loss(&map, &params, &q)?;
    Ok(PathlossOutcome {
        link,
        frequency_ghz,
        situation,
        placeholder_coefficients: placeholder,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthOutcome {
    pub config: PathBuf,
    pub buildings: PathBuf,
    pub roads: PathBuf,
    pub labels: PathBuf,
}

/// Writes the synthetic three-district city and a pipeline config using it.
pub fn cmd_synth(out_dir: &Path, seed: u64) -> Result<SynthOutcome> {
    let t = synthcity::generate_tricity(seed)?;
    let files = synthcity::write_tricity(&t, out_dir)?;
    let params = out_dir.join("pathloss_params.json");
    write(&params, PLACEHOLDER_PARAMS_JSON.as_bytes())?;
    let mut cfg = PipelineConfig::default();
    cfg.paths.buildings = Some("buildings.geojson".into());
    cfg.paths.roads = Some("roads.geojson".into());
    cfg.paths.labels = Some("labels.geojson".into());
    cfg.paths.pathloss_params = Some("pathloss_params.json".into());
    cfg.projection.origin = OriginSpec::LonLat(SYNTH_ORIGIN.0, SYNTH_ORIGIN.1);
    let config = out_dir.join("config.json");
    write(&config, &json_bytes(&cfg)?)?;
    info!(
        "synthetic city: {} buildings, {} roads",
        t.city.buildings.len(),
        t.city.roads.len()
    );
    Ok(SynthOutcome {
        config,
        buildings: files.buildings,
        roads: files.roads,
        labels: files.labels,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutcome {
    pub confusion: ConfusionMatrix,
    pub metrics: ClassMetrics,
    pub text: String,
}

/// Metrics from a CSV of `actual,predicted` class codes.
pub fn cmd_eval(predictions: &Path, out: Option<&Path>) -> Result<EvalOutcome> {
    let mut rd = csv::Reader::from_path(predictions)
        .with_context(|| format!("cannot read {}", predictions.display()))?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("{} has no {name} column", predictions.display()))
    };
    let (ia, ip) = (col("actual")?, col("predicted")?);
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<EnvironmentClass> {
            let v = rec.get(k).unwrap_or("").trim();
            v.parse().with_context(|| format!("row {}: bad class {v:?}", i + 1))
        };
        actual.push(parse(ia)?);
        predicted.push(parse(ip)?);
    }
    let confusion = evalx::confusion(&actual, &predicted)?;
    let metrics = evalx::metrics(&confusion)?;
    if let Some(out) = out {
        write(out, &json_bytes(&evalx::report_json(&confusion, &metrics))?)?;
    }
    Ok(EvalOutcome {
        confusion,
        metrics,
        text: evalx::report_text(&confusion, &metrics),
    })
}
