//! Seeded synthetic cities with per-class building and road statistics.
//!
//! Each district is a square of axis-aligned square buildings on a jittered
//! lattice plus a rectangular road grid. The lattice pitch is chosen so that a
//! buffer disk intersects the target number of buildings on average; heights
//! are log-normal with the target mean and standard deviation.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{write_file, Error, Result};
use crate::features::{EnvironmentClass, GridConfig};
use crate::geojson;
use crate::geom::{Point, Polygon};
use crate::ingest::{build_city_dataset, BuildingFootprint, CityDataset, LabeledPolygon, Projection, RoadClass, RoadSegment};

/// Per-class generation targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub height_mean: f64,
    pub height_std: f64,
    /// Mean footprint area, m².
    pub area_mean: f64,
    /// Buildings intersecting a buffer disk, on average.
    pub building_count: f64,
    /// Reference value only; with square footprints the covered fraction
    /// follows from area and count.
    pub footprint_density: f64,
    pub lanes: f64,
    /// km/h
    pub speed: f64,
    /// Distance between parallel roads, m.
    pub road_spacing: f64,
}

impl ClassProfile {
    pub fn residential() -> Self {
        ClassProfile {
            height_mean: 6.45,
            height_std: 1.81,
            area_mean: 192.91,
            building_count: 205.67,
            footprint_density: 0.13,
            lanes: 1.99,
            speed: 39.96,
            road_spacing: 120.0,
        }
    }

    pub fn urban_low_rise() -> Self {
        ClassProfile {
            height_mean: 6.94,
            height_std: 2.95,
            area_mean: 5485.19,
            building_count: 19.22,
            footprint_density: 0.23,
            lanes: 2.26,
            speed: 48.89,
            road_spacing: 200.0,
        }
    }

    pub fn urban_high_rise() -> Self {
        ClassProfile {
            height_mean: 20.25,
            height_std: 15.76,
            area_mean: 2327.38,
            building_count: 49.4,
            footprint_density: 0.38,
            lanes: 1.84,
            speed: 34.18,
            road_spacing: 100.0,
        }
    }

    pub fn for_class(class: EnvironmentClass) -> Option<Self> {
        match class {
            EnvironmentClass::Res => Some(Self::residential()),
            EnvironmentClass::Ulr => Some(Self::urban_low_rise()),
            EnvironmentClass::Uhr => Some(Self::urban_high_rise()),
            EnvironmentClass::Open => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("height_mean", self.height_mean),
            ("height_std", self.height_std),
            ("area_mean", self.area_mean),
            ("building_count", self.building_count),
            ("footprint_density", self.footprint_density),
            ("lanes", self.lanes),
            ("speed", self.speed),
            ("road_spacing", self.road_spacing),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Synth(format!("profile {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Log-standard-deviation of footprint side lengths.
const SIDE_SIGMA: f64 = 0.25;
const SIDE_CLIP: (f64, f64) = (0.5, 1.6);
const HEIGHT_CLIP: (f64, f64) = (1.0, 400.0);

/// Footprint and lattice geometry implied by a profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    /// Median side length, m.
    pub side_median: f64,
    pub side_max: f64,
    /// Lattice pitch, m.
    pub pitch: f64,
    /// Largest jitter that keeps neighbours from overlapping, m.
    pub jitter: f64,
}

/// A square of side `s` intersects a disk of radius `r` when its centre lies in
/// the disk dilated by the square, whose area is `πr² + 4rs + s²`. The pitch
/// makes the expected count over that area equal the target.
pub fn layout(profile: &ClassProfile, buffer_radius: f64) -> Result<Layout> {
    profile.validate()?;
    let r = buffer_radius;
    let side_median = (profile.area_mean / (2.0 * SIDE_SIGMA * SIDE_SIGMA).exp()).sqrt();
    let mean_side = side_median * (SIDE_SIGMA * SIDE_SIGMA / 2.0).exp();
    let reach = PI * r * r + 4.0 * r * mean_side + profile.area_mean;
    let density = profile.building_count / reach;
    let pitch = density.sqrt().recip();
    let side_max = SIDE_CLIP.1 * side_median;
    if side_max >= pitch {
        return Err(Error::Synth(format!(
            "infeasible profile: footprints up to {side_max:.1} m do not fit a {pitch:.1} m lattice"
        )));
    }
    Ok(Layout {
        side_median,
        side_max,
        pitch,
        jitter: (pitch - side_max) / 2.0,
    })
}

#[derive(Debug, Clone)]
pub struct District {
    pub class: EnvironmentClass,
    /// The district square.
    pub area: Polygon,
    pub buildings: Vec<BuildingFootprint>,
    pub roads: Vec<RoadSegment>,
    /// The district square shrunk by the buffer radius, so labelled points
    /// only see this district's buildings.
    pub label: LabeledPolygon,
}

fn road_class_for_speed(speed: f64) -> RoadClass {
    match speed {
        s if s <= 30.0 => RoadClass::Residential,
        s if s <= 40.0 => RoadClass::Tertiary,
        s if s <= 60.0 => RoadClass::Secondary,
        _ => RoadClass::Primary,
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Polygon> {
    Polygon::rect(Point::new(x0, y0), Point::new(x1, y1))
}

fn code_lower(class: EnvironmentClass) -> String {
    class.code().to_ascii_lowercase()
}

/// Generates one district of side `extent` with its lower-left corner at
/// `corner`. Deterministic in `(seed, class)`.
pub fn generate_district(
    profile: &ClassProfile,
    class: EnvironmentClass,
    extent: f64,
    corner: Point,
    seed: u64,
    grid: &GridConfig,
) -> Result<District> {
    grid.validate()?;
    let stream = class
        .index()
        .ok_or_else(|| Error::Synth("cannot generate an OPEN district".into()))?;
    let min_extent = 2.0 * grid.buffer_radius + grid.spacing;
    if !(extent >= min_extent) {
        return Err(Error::Synth(format!(
            "district extent {extent} m is below 2·buffer + spacing = {min_extent} m"
        )));
    }
    let lay = layout(profile, grid.buffer_radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64 + 1);

    let side_dist = LogNormal::new(lay.side_median.ln(), SIDE_SIGMA).expect("valid side distribution");
    let var_ln = (1.0 + (profile.height_std / profile.height_mean).powi(2)).ln();
    let height_dist = LogNormal::new(profile.height_mean.ln() - var_ln / 2.0, var_ln.sqrt())
        .map_err(|e| Error::Synth(format!("height distribution: {e}")))?;

    let n = (extent / lay.pitch).floor() as usize;
    if n == 0 {
        return Err(Error::Synth("district too small for a single building".into()));
    }
    let margin = (extent - n as f64 * lay.pitch) / 2.0;
    let prefix = code_lower(class);
    let mut buildings = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let side = side_dist
                .sample(&mut rng)
                .clamp(SIDE_CLIP.0 * lay.side_median, lay.side_max);
            let dx = rng.random_range(-lay.jitter..=lay.jitter);
            let dy = rng.random_range(-lay.jitter..=lay.jitter);
            let height = height_dist.sample(&mut rng).clamp(HEIGHT_CLIP.0, HEIGHT_CLIP.1);
            let cx = corner.x + margin + (i as f64 + 0.5) * lay.pitch + dx;
            let cy = corner.y + margin + (j as f64 + 0.5) * lay.pitch + dy;
            let h = side / 2.0;
            buildings.push(BuildingFootprint {
                id: format!("{prefix}-b{:06}", j * n + i),
                footprint: rect(cx - h, cy - h, cx + h, cy + h)?,
                height: Some((height * 100.0).round() / 100.0),
            });
        }
    }

    let lanes_noise = Normal::new(0.0, 0.6).expect("valid");
    let speed_noise = Normal::new(0.0, 8.0).expect("valid");
    let n_roads = (extent / profile.road_spacing).floor().max(1.0) as usize;
    let road_margin = (extent - (n_roads - 1) as f64 * profile.road_spacing) / 2.0;
    let mut roads = Vec::with_capacity(2 * n_roads);
    for (axis, tag) in [(0, 'v'), (1, 'h')] {
        for k in 0..n_roads {
            let offset = road_margin + k as f64 * profile.road_spacing;
            let (a, b) = if axis == 0 {
                (
                    Point::new(corner.x + offset, corner.y),
                    Point::new(corner.x + offset, corner.y + extent),
                )
            } else {
                (
                    Point::new(corner.x, corner.y + offset),
                    Point::new(corner.x + extent, corner.y + offset),
                )
            };
            let lanes = (profile.lanes + lanes_noise.sample(&mut rng)).round().max(1.0) as u32;
            let speed = ((profile.speed + speed_noise.sample(&mut rng)) / 10.0).round() * 10.0;
            let speed = speed.clamp(20.0, 100.0);
            roads.push(RoadSegment {
                id: format!("{prefix}-r{tag}{k:03}"),
                path: vec![a, b],
                road_class: road_class_for_speed(speed),
                lanes: Some(lanes),
                maxspeed: Some(speed),
                name: None,
            });
        }
    }

    let r = grid.buffer_radius;
    Ok(District {
        class,
        area: rect(corner.x, corner.y, corner.x + extent, corner.y + extent)?,
        buildings,
        roads,
        label: LabeledPolygon {
            polygon: rect(corner.x + r, corner.y + r, corner.x + extent - r, corner.y + extent - r)?,
            label: class,
        },
    })
}

/// Lon/lat origin of the synthetic city's projection.
pub const SYNTH_ORIGIN: (f64, f64) = (-73.5673, 45.5017);

/// District side lengths in RES, ULR, UHR order. Unequal sizes give the
/// classes unequal sample counts, as labelled field data usually has.
pub const TRICITY_EXTENTS: [f64; 3] = [1560.0, 2100.0, 1320.0];

#[derive(Debug, Clone)]
pub struct Tricity {
    pub city: CityDataset,
    pub labels: Vec<LabeledPolygon>,
    pub districts: Vec<District>,
    pub seed: u64,
}

/// Three districts in a row along x (RES, ULR, UHR) separated by empty
/// gaps of `2·buffer_radius + 200` m, using the default grid configuration.
pub fn generate_tricity(seed: u64) -> Result<Tricity> {
    generate_tricity_with(seed, &GridConfig::default())
}

pub fn generate_tricity_with(seed: u64, grid: &GridConfig) -> Result<Tricity> {
    let gap = 2.0 * grid.buffer_radius + 200.0;
    let mut x = 0.0;
    let mut districts = Vec::new();
    for (class, extent) in EnvironmentClass::TRAINING.into_iter().zip(TRICITY_EXTENTS) {
        let profile = ClassProfile::for_class(class).expect("training class");
        districts.push(generate_district(&profile, class, extent, Point::new(x, 0.0), seed, grid)?);
        x += extent + gap;
    }
    let buildings = districts.iter().flat_map(|d| d.buildings.clone()).collect();
    let roads = districts.iter().flat_map(|d| d.roads.clone()).collect();
    let projection = Projection::new(SYNTH_ORIGIN.0, SYNTH_ORIGIN.1)?;
    let city = build_city_dataset(buildings, roads, projection)?;
    let labels = districts.iter().map(|d| d.label.clone()).collect();
    Ok(Tricity {
        city,
        labels,
        districts,
        seed,
    })
}

fn lonlat_ring(ring: &[Point], proj: &Projection) -> Vec<(f64, f64)> {
    ring.iter().map(|p| proj.unproject(*p)).collect()
}

pub fn buildings_geojson(buildings: &[BuildingFootprint], proj: &Projection) -> Value {
    let features = buildings
        .iter()
        .map(|b| {
            let mut props = Map::new();
            props.insert("id".into(), json!(b.id));
            if let Some(h) = b.height {
                props.insert("height".into(), json!(h));
            }
            let ring = lonlat_ring(b.footprint.exterior(), proj);
            geojson::feature(geojson::polygon_geometry(&ring), props)
        })
        .collect();
    geojson::feature_collection(features, Map::new())
}

pub fn roads_geojson(roads: &[RoadSegment], proj: &Projection) -> Value {
    let features = roads
        .iter()
        .map(|r| {
            let mut props = Map::new();
            props.insert("id".into(), json!(r.id));
            props.insert("highway".into(), json!(r.road_class.as_str()));
            if let Some(l) = r.lanes {
                props.insert("lanes".into(), json!(l.to_string()));
            }
            if let Some(s) = r.maxspeed {
                props.insert("maxspeed".into(), json!(format!("{s}")));
            }
            geojson::feature(geojson::linestring_geometry(&lonlat_ring(&r.path, proj)), props)
        })
        .collect();
    geojson::feature_collection(features, Map::new())
}

pub fn labels_geojson(labels: &[LabeledPolygon], proj: &Projection) -> Value {
    let features = labels
        .iter()
        .map(|l| {
            let mut props = Map::new();
            props.insert("env_class".into(), json!(l.label.code()));
            let ring = lonlat_ring(l.polygon.exterior(), proj);
            geojson::feature(geojson::polygon_geometry(&ring), props)
        })
        .collect();
    geojson::feature_collection(features, Map::new())
}

#[derive(Debug, Clone)]
pub struct TricityFiles {
    pub buildings: PathBuf,
    pub roads: PathBuf,
    pub labels: PathBuf,
}

/// Writes `buildings.geojson`, `roads.geojson` and `labels.geojson` into `dir`.
pub fn write_tricity(t: &Tricity, dir: &Path) -> Result<TricityFiles> {
    let proj = &t.city.projection;
    let files = TricityFiles {
        buildings: dir.join("buildings.geojson"),
        roads: dir.join("roads.geojson"),
        labels: dir.join("labels.geojson"),
    };
    write_file(&files.buildings, &geojson::to_bytes(&buildings_geojson(&t.city.buildings, proj))?)?;
    write_file(&files.roads, &geojson::to_bytes(&roads_geojson(&t.city.roads, proj))?)?;
    write_file(&files.labels, &geojson::to_bytes(&labels_geojson(&t.labels, proj))?)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_count_geometry() {
        let p = ClassProfile::residential();
        let l = layout(&p, 300.0).unwrap();
        // Expected intersecting count: density · (πr² + 4r·E[s] + A).
        let mean_side = l.side_median * (SIDE_SIGMA.powi(2) / 2.0).exp();
        let expected = (PI * 90_000.0 + 1200.0 * mean_side + p.area_mean) / l.pitch.powi(2);
        assert!((expected - p.building_count).abs() < 1e-9);
        assert!(l.jitter > 0.0);
    }

    #[test]
    fn rejects_bad_profiles() {
        let mut p = ClassProfile::residential();
        p.building_count = 0.0;
        assert!(layout(&p, 300.0).is_err());
        let mut p = ClassProfile::urban_low_rise();
        p.building_count = 400.0;
        assert!(matches!(layout(&p, 300.0), Err(Error::Synth(_))));
        let g = GridConfig::default();
        assert!(generate_district(&ClassProfile::residential(), EnvironmentClass::Res, 500.0, Point::new(0.0, 0.0), 1, &g).is_err());
        assert!(generate_district(&ClassProfile::residential(), EnvironmentClass::Open, 900.0, Point::new(0.0, 0.0), 1, &g).is_err());
    }

    #[test]
    fn districts_do_not_overlap_buildings() {
        let g = GridConfig::default();
        let d = generate_district(&ClassProfile::urban_high_rise(), EnvironmentClass::Uhr, 700.0, Point::new(0.0, 0.0), 9, &g).unwrap();
        let boxes: Vec<_> = d.buildings.iter().map(|b| b.footprint.bbox()).collect();
        for (i, a) in boxes.iter().enumerate() {
            for b in &boxes[i + 1..] {
                let overlap = a.min_x < b.max_x && b.min_x < a.max_x && a.min_y < b.max_y && b.min_y < a.max_y;
                assert!(!overlap);
            }
        }
        assert!(d.buildings.iter().all(|b| d.area.contains(b.footprint.bbox().center())));
    }

    #[test]
    fn tricity_shape() {
        let t = generate_tricity(7).unwrap();
        assert_eq!(t.labels.len(), 3);
        let classes: Vec<_> = t.labels.iter().map(|l| l.label).collect();
        assert_eq!(classes, EnvironmentClass::TRAINING);
        for w in t.districts.windows(2) {
            let gap = w[1].area.bbox().min_x - w[0].area.bbox().max_x;
            assert!(gap > 600.0);
        }
        let other = generate_tricity(8).unwrap();
        assert_ne!(t.city.buildings[0].footprint, other.city.buildings[0].footprint);
    }
}
