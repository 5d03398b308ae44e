//! Grid sampling and per-point neighbourhood statistics.
//!
//! Each grid point is summarised by twelve statistics of the buildings and
//! roads within a buffer disk around it. A building belongs to the buffer when
//! its footprint intersects the disk; height and area statistics use the full
//! building, while footprint density uses only the clipped part.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{disk_intersection_area, DiskQuery, Point, Polygon, SpatialIndex};
use crate::ingest::{CityDataset, LabeledPolygon, RoadClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvironmentClass {
    #[serde(rename = "RES")]
    Res,
    #[serde(rename = "ULR")]
    Ulr,
    #[serde(rename = "UHR")]
    Uhr,
    /// No buildings in the buffer. Never used as a training label.
    #[serde(rename = "OPEN")]
    Open,
}

impl EnvironmentClass {
    /// The three trainable classes, in tie-break order.
    pub const TRAINING: [EnvironmentClass; 3] = [
        EnvironmentClass::Res,
        EnvironmentClass::Ulr,
        EnvironmentClass::Uhr,
    ];

    pub const ALL: [EnvironmentClass; 4] = [
        EnvironmentClass::Res,
        EnvironmentClass::Ulr,
        EnvironmentClass::Uhr,
        EnvironmentClass::Open,
    ];

    pub fn code(self) -> &'static str {
        match self {
            EnvironmentClass::Res => "RES",
            EnvironmentClass::Ulr => "ULR",
            EnvironmentClass::Uhr => "UHR",
            EnvironmentClass::Open => "OPEN",
        }
    }

    pub fn is_training_label(self) -> bool {
        self != EnvironmentClass::Open
    }

    /// Class index used by the forest (0 = RES, 1 = ULR, 2 = UHR).
    pub fn index(self) -> Option<usize> {
        EnvironmentClass::TRAINING.iter().position(|c| *c == self)
    }

    pub fn from_index(i: usize) -> Option<EnvironmentClass> {
        EnvironmentClass::TRAINING.get(i).copied()
    }
}

impl fmt::Display for EnvironmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for EnvironmentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvironmentClass::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| Error::Pipeline(format!("unknown environment class {s:?}")))
    }
}

pub const N_FEATURES: usize = 12;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "avg_height",
    "median_height",
    "std_height",
    "max_height",
    "min_height",
    "avg_area",
    "max_area",
    "min_area",
    "building_count",
    "footprint_density",
    "avg_lanes",
    "avg_speed",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// Neighbourhood statistics of one grid point. Heights in m, areas in m²,
/// speed in km/h.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub avg_height: f64,
    pub median_height: f64,
    pub std_height: f64,
    pub max_height: f64,
    pub min_height: f64,
    pub avg_area: f64,
    pub max_area: f64,
    pub min_area: f64,
    pub building_count: f64,
    pub footprint_density: f64,
    pub avg_lanes: f64,
    pub avg_speed: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.avg_height,
            self.median_height,
            self.std_height,
            self.max_height,
            self.min_height,
            self.avg_area,
            self.max_area,
            self.min_area,
            self.building_count,
            self.footprint_density,
            self.avg_lanes,
            self.avg_speed,
        ]
    }

    pub fn from_array(a: [f64; N_FEATURES]) -> Self {
        FeatureVector {
            avg_height: a[0],
            median_height: a[1],
            std_height: a[2],
            max_height: a[3],
            min_height: a[4],
            avg_area: a[5],
            max_area: a[6],
            min_area: a[7],
            building_count: a[8],
            footprint_density: a[9],
            avg_lanes: a[10],
            avg_speed: a[11],
        }
    }
}

fn default_spacing() -> f64 {
    30.0
}

fn default_buffer_radius() -> f64 {
    300.0
}

fn default_min_buildings() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Lattice step in metres.
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_buffer_radius")]
    pub buffer_radius: f64,
    /// Points whose buffer holds fewer buildings are excluded from training
    /// and mapped as OPEN.
    #[serde(default = "default_min_buildings")]
    pub min_buildings: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            spacing: default_spacing(),
            buffer_radius: default_buffer_radius(),
            min_buildings: default_min_buildings(),
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::Pipeline(format!("grid spacing must be > 0, got {}", self.spacing)));
        }
        if !(self.buffer_radius.is_finite() && self.buffer_radius > 0.0) {
            return Err(Error::Pipeline(format!(
                "buffer radius must be > 0, got {}",
                self.buffer_radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub location: Point,
    pub features: FeatureVector,
    pub label: Option<EnvironmentClass>,
}

/// Lane count assumed for a road without a `lanes` tag.
pub fn default_lanes(class: RoadClass) -> u32 {
    match class {
        RoadClass::Motorway => 3,
        RoadClass::Trunk | RoadClass::Primary | RoadClass::Secondary | RoadClass::Tertiary => 2,
        RoadClass::Unclassified | RoadClass::Residential => 1,
    }
}

/// Speed limit (km/h) assumed for a road without a `maxspeed` tag.
pub fn default_speed(class: RoadClass) -> f64 {
    match class {
        RoadClass::Motorway => 100.0,
        RoadClass::Trunk => 80.0,
        RoadClass::Primary => 60.0,
        RoadClass::Secondary | RoadClass::Tertiary | RoadClass::Unclassified => 50.0,
        RoadClass::Residential => 40.0,
    }
}

/// Lattice points inside `region`, anchored at its bounding-box minimum and
/// ordered row by row (y, then x, ascending).
pub fn generate_grid(region: &Polygon, cfg: &GridConfig) -> Vec<Point> {
    if region.area() <= 0.0 || !(cfg.spacing > 0.0) {
        return Vec::new();
    }
    let bb = region.bbox();
    // Extents that are whole multiples of the spacing may come back a few
    // ulps short after a lon/lat round trip.
    let steps = |len: f64| (len / cfg.spacing * (1.0 + 1e-9)).floor() as usize + 1;
    let (nx, ny) = (steps(bb.width()), steps(bb.height()));
    let mut out = Vec::new();
    for j in 0..ny {
        let y = (bb.min_y + j as f64 * cfg.spacing).min(bb.max_y);
        for i in 0..nx {
            let p = Point::new((bb.min_x + i as f64 * cfg.spacing).min(bb.max_x), y);
            if region.contains(p) {
                out.push(p);
            }
        }
    }
    out
}

struct Summary {
    mean: f64,
    median: f64,
    std: f64,
    min: f64,
    max: f64,
}

/// Summary statistics; `values` must be non-empty. Standard deviation is the
/// population form.
fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Summary {
        mean,
        median,
        std: var.sqrt(),
        min,
        max,
    }
}

/// Statistics of the buffer around `pt`. Both query structures must index
/// `city.buildings` and `city.roads` respectively.
pub fn compute_features<B, R>(pt: Point, city: &CityDataset, bidx: &B, ridx: &R, cfg: &GridConfig) -> FeatureVector
where
    B: DiskQuery + ?Sized,
    R: DiskQuery + ?Sized,
{
    let r = cfg.buffer_radius;
    let mut fv = FeatureVector::default();

    // Ids come back ascending and buildings are sorted by id, which fixes the
    // summation order.
    let ids = bidx.query_disk(pt, r);
    if !ids.is_empty() {
        let buildings = ids.iter().map(|&i| &city.buildings[i]);
        let heights: Vec<f64> = buildings.clone().filter_map(|b| b.height).collect();
        let areas: Vec<f64> = buildings.clone().map(|b| b.area()).collect();
        let covered: f64 = buildings
            .map(|b| disk_intersection_area(&b.footprint, pt, r))
            .sum();

        if !heights.is_empty() {
            let h = summarize(&heights);
            fv.avg_height = h.mean;
            fv.median_height = h.median;
            fv.std_height = h.std;
            fv.max_height = h.max;
            fv.min_height = h.min;
        }
        let a = summarize(&areas);
        fv.avg_area = a.mean;
        fv.max_area = a.max;
        fv.min_area = a.min;
        fv.building_count = ids.len() as f64;
        fv.footprint_density = covered / (std::f64::consts::PI * r * r);
    }

    let mut length = 0.0;
    let mut lane_sum = 0.0;
    let mut speed_sum = 0.0;
    for i in ridx.query_disk(pt, r) {
        let road = &city.roads[i];
        let l = road.length_in_disk(pt, r);
        let lanes = road.lanes.unwrap_or_else(|| default_lanes(road.road_class)) as f64;
        let speed = road.maxspeed.unwrap_or_else(|| default_speed(road.road_class));
        length += l;
        lane_sum += l * lanes;
        speed_sum += l * speed;
    }
    if length > 0.0 {
        fv.avg_lanes = lane_sum / length;
        fv.avg_speed = speed_sum / length;
    }
    fv
}

/// Features for many points in parallel; output order follows `points`.
pub fn compute_features_many(points: &[Point], city: &CityDataset, cfg: &GridConfig) -> Vec<FeatureVector> {
    let bidx = SpatialIndex::build(&city.buildings);
    let ridx = SpatialIndex::build(&city.roads);
    points
        .par_iter()
        .map(|p| compute_features(*p, city, &bidx, &ridx, cfg))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMatch {
    Outside,
    Inside(EnvironmentClass),
    Conflict,
}

pub fn match_label(pt: Point, labels: &[LabeledPolygon]) -> LabelMatch {
    let mut found: Option<EnvironmentClass> = None;
    for l in labels {
        if l.polygon.contains(pt) {
            match found {
                Some(c) if c != l.label => return LabelMatch::Conflict,
                _ => found = Some(l.label),
            }
        }
    }
    found.map_or(LabelMatch::Outside, LabelMatch::Inside)
}

/// Labels points by the polygon containing them. Points inside polygons with
/// conflicting labels are dropped; the count of dropped points is returned.
pub fn label_points(points: Vec<SamplePoint>, labels: &[LabeledPolygon]) -> (Vec<SamplePoint>, usize) {
    let mut dropped = 0;
    let kept = points
        .into_iter()
        .filter_map(|mut sp| match match_label(sp.location, labels) {
            LabelMatch::Outside => {
                sp.label = None;
                Some(sp)
            }
            LabelMatch::Inside(c) => {
                sp.label = Some(c);
                Some(sp)
            }
            LabelMatch::Conflict => {
                dropped += 1;
                None
            }
        })
        .collect();
    if dropped > 0 {
        warn!("dropped {dropped} grid points inside conflicting label polygons");
    }
    (kept, dropped)
}

/// Grids every labelled polygon, labels the points and computes their
/// features. Points below `cfg.min_buildings` are excluded.
pub fn extract_training_set(city: &CityDataset, labels: &[LabeledPolygon], cfg: &GridConfig) -> Result<Vec<SamplePoint>> {
    cfg.validate()?;
    let mut locations: Vec<Point> = labels
        .iter()
        .flat_map(|l| generate_grid(&l.polygon, cfg))
        .collect();
    // Overlapping polygons can emit the same lattice point twice.
    let mut seen = std::collections::HashSet::new();
    locations.retain(|p| seen.insert((p.x.to_bits(), p.y.to_bits())));

    let unlabelled: Vec<SamplePoint> = locations
        .into_iter()
        .map(|location| SamplePoint {
            location,
            features: FeatureVector::default(),
            label: None,
        })
        .collect();
    let (mut samples, _) = label_points(unlabelled, labels);
    samples.retain(|s| s.label.is_some());

    let points: Vec<Point> = samples.iter().map(|s| s.location).collect();
    let features = compute_features_many(&points, city, cfg);
    for (s, f) in samples.iter_mut().zip(features) {
        s.features = f;
    }
    let before = samples.len();
    samples.retain(|s| s.features.building_count >= cfg.min_buildings as f64);
    if before > samples.len() {
        warn!(
            "excluded {} training points with fewer than {} buildings in the buffer",
            before - samples.len(),
            cfg.min_buildings
        );
    }
    if samples.is_empty() {
        return Err(Error::Pipeline(
            "no training samples: every labelled grid point has an empty buffer".into(),
        ));
    }
    Ok(samples)
}

/// Writes samples as CSV: `x, y`, the twelve features, `label` (empty when unlabelled).
pub fn write_samples_csv(path: &Path, samples: &[SamplePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x", "y"];
    header.extend(FEATURE_NAMES);
    header.push("label");
    w.write_record(&header)?;
    for s in samples {
        let mut row: Vec<String> = vec![s.location.x.to_string(), s.location.y.to_string()];
        row.extend(s.features.to_array().iter().map(|v| v.to_string()));
        row.push(s.label.map_or(String::new(), |c| c.code().to_string()));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Pipeline(e.to_string()))?;
    crate::error::write_file(path, &bytes)
}
