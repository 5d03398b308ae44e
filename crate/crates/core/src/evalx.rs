//! Hold-out evaluation: stratified splitting, confusion matrices, per-class
//! precision and recall, and two-feature decision boundary grids.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{write_file, Error, Result};
use crate::features::{EnvironmentClass, SamplePoint, FEATURE_NAMES, N_FEATURES};
use crate::forest::{self, ForestConfig, ForestModel, TrainingData};
use crate::svg::{Palette, SvgDoc};

const K: usize = 3;

fn class_index(c: EnvironmentClass) -> Result<usize> {
    c.index()
        .ok_or_else(|| Error::Eval(format!("{c} is not an evaluation class")))
}

fn sample_label(i: usize, s: &SamplePoint) -> Result<EnvironmentClass> {
    s.label
        .filter(|l| l.is_training_label())
        .ok_or_else(|| Error::Eval(format!("sample {i} has no training label")))
}

/// Seeded train/test split. With stratification each class contributes
/// `round(train_fraction · n_class)` samples to the training side.
pub fn split(
    samples: &[SamplePoint],
    train_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<SamplePoint>, Vec<SamplePoint>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Eval(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::Eval("no samples to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = if stratified {
        let mut groups = vec![Vec::new(); K];
        for (i, s) in samples.iter().enumerate() {
            groups[class_index(sample_label(i, s)?)?].push(i);
        }
        if let Some(c) = groups.iter().position(Vec::is_empty) {
            return Err(Error::Eval(format!(
                "class {} has no samples; cannot stratify",
                EnvironmentClass::TRAINING[c]
            )));
        }
        groups
    } else {
        vec![(0..samples.len()).collect()]
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut g in groups {
        g.shuffle(&mut rng);
        let n_train = (train_fraction * g.len() as f64).round() as usize;
        train.extend(g[..n_train].iter().map(|&i| samples[i]));
        test.extend(g[n_train..].iter().map(|&i| samples[i]));
    }
    Ok((train, test))
}

/// Rows are the actual class, columns the predicted class, both in RES, ULR,
/// UHR order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

pub fn confusion(actual: &[EnvironmentClass], predicted: &[EnvironmentClass]) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(Error::Eval(format!(
            "{} actual labels but {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Eval("no labels to compare".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&a, &p) in actual.iter().zip(predicted) {
        cm.counts[class_index(a)?][class_index(p)?] += 1;
    }
    Ok(cm)
}

/// Precision or recall is `None` when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: [Option<f64>; K],
    pub recall: [Option<f64>; K],
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Eval("confusion matrix is empty".into()));
    }
    let mut precision = [None; K];
    let mut recall = [None; K];
    for c in 0..K {
        precision[c] = ratio(cm.counts[c][c], cm.col_sum(c));
        recall[c] = ratio(cm.counts[c][c], cm.row_sum(c));
    }
    Ok(ClassMetrics {
        precision,
        recall,
        accuracy: cm.trace() as f64 / total as f64,
    })
}

/// Confusion matrix of `model` on labelled samples.
pub fn evaluate(model: &ForestModel, samples: &[SamplePoint]) -> Result<ConfusionMatrix> {
    let actual = samples
        .iter()
        .enumerate()
        .map(|(i, s)| sample_label(i, s))
        .collect::<Result<Vec<_>>>()?;
    let predicted = samples
        .par_iter()
        .map(|s| model.predict(&s.features))
        .collect::<Result<Vec<_>>>()?;
    confusion(&actual, &predicted)
}

fn by_class(values: &[Option<f64>; K]) -> Value {
    let mut m = Map::new();
    for (c, v) in EnvironmentClass::TRAINING.iter().zip(values) {
        m.insert(c.code().into(), v.map_or(Value::Null, |v| json!(v)));
    }
    Value::Object(m)
}

/// `{confusion, precision, recall, accuracy}`; undefined ratios are `null`.
pub fn report_json(cm: &ConfusionMatrix, m: &ClassMetrics) -> Value {
    json!({
        "confusion": cm.counts,
        "precision": by_class(&m.precision),
        "recall": by_class(&m.recall),
        "accuracy": m.accuracy,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

/// Aligned plain-text confusion matrix and metrics table.
pub fn report_text(cm: &ConfusionMatrix, m: &ClassMetrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "confusion (rows = actual, columns = predicted)");
    let _ = writeln!(s, "{:>8}{:>10}{:>10}{:>10}", "", "RES", "ULR", "UHR");
    for (c, row) in EnvironmentClass::TRAINING.iter().zip(&cm.counts) {
        let _ = writeln!(s, "{:>8}{:>10}{:>10}{:>10}", c.code(), row[0], row[1], row[2]);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:>8}{:>11}{:>11}", "class", "precision", "recall");
    for (i, c) in EnvironmentClass::TRAINING.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:>8}{:>11}{:>11}",
            c.code(),
            cell(m.precision[i]),
            cell(m.recall[i])
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "accuracy {:.4} ({}/{})", m.accuracy, cm.trace(), cm.total());
    s
}

/// Nearest-rank percentile of unsorted values, `p` in (0, 100].
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayPoint {
    pub x: f64,
    pub y: f64,
    pub class: EnvironmentClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub feature_x: usize,
    pub feature_y: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub resolution: usize,
    /// Row-major from the lowest `y` row; `cells[j * resolution + i]`.
    pub cells: Vec<EnvironmentClass>,
    pub overlay: Vec<OverlayPoint>,
}

impl BoundaryGrid {
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let n = self.resolution as f64;
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        (
            x0 + (i as f64 + 0.5) * (x1 - x0) / n,
            y0 + (j as f64 + 0.5) * (y1 - y0) / n,
        )
    }

    pub fn class_at(&self, i: usize, j: usize) -> EnvironmentClass {
        self.cells[j * self.resolution + i]
    }
}

pub const DEFAULT_RESOLUTION: usize = 200;

/// Trains an auxiliary forest on features `fx` and `fy` only and classifies
/// the centres of a `resolution²` grid spanning the 1st–99th percentile of
/// both features. Sample points inside those bounds are overlaid with the
/// class `full_model` assigns them; points outside still train the forest.
pub fn decision_boundary(
    samples: &[SamplePoint],
    fx: usize,
    fy: usize,
    cfg: &ForestConfig,
    full_model: &ForestModel,
    resolution: usize,
) -> Result<BoundaryGrid> {
    if fx == fy {
        return Err(Error::Eval("decision boundary needs two different features".into()));
    }
    if fx >= N_FEATURES || fy >= N_FEATURES {
        return Err(Error::Eval(format!("feature index out of range: {fx}, {fy}")));
    }
    if resolution == 0 {
        return Err(Error::Eval("grid resolution must be positive".into()));
    }
    // Canonical order makes the auxiliary forest independent of input order.
    let mut rows: Vec<([f64; 2], usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let a = s.features.to_array();
            Ok(([a[fx], a[fy]], class_index(sample_label(i, s)?)?))
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Eval("no samples for decision boundary".into()));
    }
    rows.sort_by(|a, b| {
        a.0[0]
            .total_cmp(&b.0[0])
            .then(a.0[1].total_cmp(&b.0[1]))
            .then(a.1.cmp(&b.1))
    });

    let range = |k: usize, name: &str| -> Result<(f64, f64)> {
        let vals: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
        let lo = percentile_nearest_rank(&vals, 1.0).expect("nonempty");
        let hi = percentile_nearest_rank(&vals, 99.0).expect("nonempty");
        if !(hi > lo) {
            return Err(Error::Eval(format!(
                "feature {name} has no spread between its 1st and 99th percentiles"
            )));
        }
        Ok((lo, hi))
    };
    let x_range = range(0, FEATURE_NAMES[fx])?;
    let y_range = range(1, FEATURE_NAMES[fy])?;

    let x: Vec<[f64; 2]> = rows.iter().map(|r| r.0).collect();
    let y: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let data = TrainingData::from_rows(&x, &y, K).map_err(|e| Error::Eval(e.to_string()))?;
    let aux_cfg = ForestConfig {
        features_per_split: cfg.features_per_split.map(|k| k.min(2)),
        ..cfg.clone()
    };
    let aux = forest::train(&data, &aux_cfg, &[FEATURE_NAMES[fx], FEATURE_NAMES[fy]])?;

    let mut grid = BoundaryGrid {
        feature_x: fx,
        feature_y: fy,
        x_range,
        y_range,
        resolution,
        cells: Vec::new(),
        overlay: Vec::new(),
    };
    grid.cells = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| {
            let (cx, cy) = grid.cell_center(k % resolution, k / resolution);
            EnvironmentClass::from_index(aux.predict_index(&[cx, cy])).expect("class index")
        })
        .collect();

    for s in samples {
        let a = s.features.to_array();
        let (px, py) = (a[fx], a[fy]);
        if px < x_range.0 || px > x_range.1 || py < y_range.0 || py > y_range.1 {
            continue;
        }
        grid.overlay.push(OverlayPoint {
            x: px,
            y: py,
            class: full_model.predict(&s.features)?,
        });
    }
    Ok(grid)
}

/// CSV with one `cell_x,cell_y,class` row per grid cell.
pub fn write_boundary_csv(grid: &BoundaryGrid, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cell_x", "cell_y", "class"])?;
    for j in 0..grid.resolution {
        for i in 0..grid.resolution {
            let (x, y) = grid.cell_center(i, j);
            w.write_record([x.to_string(), y.to_string(), grid.class_at(i, j).code().to_string()])?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Eval(format!("csv buffer: {e}")))?;
    write_file(path, &bytes)
}

/// Heat plot of the grid with the sample overlay and a legend.
pub fn boundary_svg(grid: &BoundaryGrid, palette: &Palette) -> String {
    let (plot, margin, legend_w) = (600.0, 70.0, 110.0);
    let mut doc = SvgDoc::new(plot + 2.0 * margin + legend_w, plot + 2.0 * margin);
    let n = grid.resolution;
    let cell = plot / n as f64;
    // One rectangle per horizontal run of equal classes.
    for j in 0..n {
        let top = margin + plot - (j + 1) as f64 * cell;
        let mut i = 0;
        while i < n {
            let c = grid.class_at(i, j);
            let mut end = i + 1;
            while end < n && grid.class_at(end, j) == c {
                end += 1;
            }
            doc.rect(margin + i as f64 * cell, top, (end - i) as f64 * cell, cell, palette.color(c));
            i = end;
        }
    }
    let (x0, x1) = grid.x_range;
    let (y0, y1) = grid.y_range;
    for p in &grid.overlay {
        let sx = margin + (p.x - x0) / (x1 - x0) * plot;
        let sy = margin + plot - (p.y - y0) / (y1 - y0) * plot;
        doc.circle(sx, sy, 2.5, palette.color(p.class));
    }
    doc.line(margin, margin + plot, margin + plot, margin + plot);
    doc.line(margin, margin, margin, margin + plot);
    let tick = |v: f64| format!("{v:.3}");
    doc.text(margin, margin + plot + 18.0, 11.0, "start", &tick(x0));
    doc.text(margin + plot, margin + plot + 18.0, 11.0, "end", &tick(x1));
    doc.text(margin - 6.0, margin + plot, 11.0, "end", &tick(y0));
    doc.text(margin - 6.0, margin + 10.0, 11.0, "end", &tick(y1));
    doc.text(margin + plot / 2.0, margin + plot + 45.0, 14.0, "middle", FEATURE_NAMES[grid.feature_x]);
    doc.text(margin - 10.0, margin - 15.0, 14.0, "start", FEATURE_NAMES[grid.feature_y]);
    doc.legend(margin + plot + 20.0, margin, palette, &EnvironmentClass::TRAINING);
    doc.finish()
}

pub fn write_boundary_svg(grid: &BoundaryGrid, palette: &Palette, path: &Path) -> Result<()> {
    write_file(path, boundary_svg(grid, palette).as_bytes())
}
