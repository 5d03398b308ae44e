//! Loading building, road and training-label geodata from GeoJSON.
//!
//! All inputs are lon/lat (RFC 7946) and are projected on load to a local
//! equirectangular frame in metres. Over a city-sized extent (≤ 50 km) the
//! distance distortion of that projection stays below 0.1 %.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::features::EnvironmentClass;
use crate::geojson::{self, RawFeature};
use crate::geom::{self, convex_hull, BBox, Point, Polygon, Spatial};

/// Mean Earth radius used by the local projection, in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

const MAX_ABS_LATITUDE: f64 = 85.0;

/// Local equirectangular projection about a fixed origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lon0: f64,
    pub lat0: f64,
}

impl Projection {
    pub fn new(lon0: f64, lat0: f64) -> Result<Self> {
        check_latitude(lat0)?;
        if !lon0.is_finite() {
            return Err(Error::Projection(format!("origin longitude {lon0} is not finite")));
        }
        Ok(Projection { lon0, lat0 })
    }

    pub fn project(&self, lon: f64, lat: f64) -> Result<Point> {
        project_lonlat(lon, lat, (self.lon0, self.lat0))
    }

    /// Analytic inverse of [`Projection::project`].
    pub fn unproject(&self, p: Point) -> (f64, f64) {
        let k = EARTH_RADIUS_M.to_radians();
        let lat = self.lat0 + p.y / k;
        let lon = self.lon0 + p.x / (k * self.lat0.to_radians().cos());
        (lon, lat)
    }

    pub fn crs_note(&self) -> String {
        format!(
            "local equirectangular metres about lon {}, lat {} (R = {} m)",
            self.lon0, self.lat0, EARTH_RADIUS_M
        )
    }
}

fn check_latitude(lat: f64) -> Result<()> {
    if !lat.is_finite() || lat.abs() >= MAX_ABS_LATITUDE {
        return Err(Error::Projection(format!(
            "latitude {lat} outside the supported range (|lat| < {MAX_ABS_LATITUDE})"
        )));
    }
    Ok(())
}

/// `x = R·cos(lat0)·Δlon`, `y = R·Δlat`, angles in radians.
pub fn project_lonlat(lon: f64, lat: f64, origin: (f64, f64)) -> Result<Point> {
    check_latitude(lat)?;
    check_latitude(origin.1)?;
    if !lon.is_finite() {
        return Err(Error::Projection(format!("longitude {lon} is not finite")));
    }
    let (lon0, lat0) = origin;
    Ok(Point::new(
        EARTH_RADIUS_M * lat0.to_radians().cos() * (lon - lon0).to_radians(),
        EARTH_RADIUS_M * (lat - lat0).to_radians(),
    ))
}

/// Where the projection origin comes from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OriginSpec {
    /// Centre of the lon/lat bounding box of the building file.
    #[default]
    Auto,
    LonLat(f64, f64),
}

impl Serialize for OriginSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OriginSpec::Auto => s.serialize_str("auto"),
            OriginSpec::LonLat(lon, lat) => [*lon, *lat].serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for OriginSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Pair([f64; 2]),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "auto" => Ok(OriginSpec::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "origin must be \"auto\" or [lon, lat], got {w:?}"
            ))),
            Raw::Pair([lon, lat]) => Ok(OriginSpec::LonLat(lon, lat)),
        }
    }
}

fn default_height_key() -> String {
    "height".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    #[serde(default)]
    pub origin: OriginSpec,
    #[serde(default = "default_height_key")]
    pub height_key: String,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        ProjectionSpec {
            origin: OriginSpec::Auto,
            height_key: default_height_key(),
        }
    }
}

impl ProjectionSpec {
    /// Fixes the origin. `Auto` reads the building file and takes the centre of
    /// its coordinate bounding box so every input of a run shares one frame.
    pub fn resolve(&self, buildings_path: &Path) -> Result<Projection> {
        match self.origin {
            OriginSpec::LonLat(lon, lat) => Projection::new(lon, lat),
            OriginSpec::Auto => {
                let (_, features) = geojson::read_feature_collection(buildings_path)?;
                let mut bb = BBox::EMPTY;
                for f in &features {
                    if let Some(c) = f.coordinates() {
                        collect_positions(c, &mut |lon, lat| {
                            if lon.is_finite() && lat.is_finite() && lat.abs() < MAX_ABS_LATITUDE {
                                bb = bb.extend(Point::new(lon, lat));
                            }
                        });
                    }
                }
                if bb.is_empty() {
                    return Err(Error::ingest(
                        buildings_path,
                        "no coordinates to derive a projection origin from",
                    ));
                }
                let c = bb.center();
                Projection::new(c.x, c.y)
            }
        }
    }
}

fn collect_positions(v: &Value, f: &mut impl FnMut(f64, f64)) {
    if let Some((lon, lat)) = geojson::position(v) {
        f(lon, lat);
    } else if let Some(arr) = v.as_array() {
        for item in arr {
            collect_positions(item, f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingFootprint {
    pub id: String,
    pub footprint: Polygon,
    pub height: Option<f64>,
}

impl BuildingFootprint {
    pub fn area(&self) -> f64 {
        self.footprint.area()
    }
}

impl Spatial for BuildingFootprint {
    fn bbox(&self) -> BBox {
        self.footprint.bbox()
    }

    fn intersects_disk(&self, center: Point, radius: f64) -> bool {
        self.footprint.intersects_disk(center, radius)
    }
}

/// OSM `highway` classes kept for the morphology features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadClass {
    Motorway,
    Trunk,
    Primary,
    Secondary,
    Tertiary,
    Unclassified,
    Residential,
}

impl RoadClass {
    pub const ALL: [RoadClass; 7] = [
        RoadClass::Motorway,
        RoadClass::Trunk,
        RoadClass::Primary,
        RoadClass::Secondary,
        RoadClass::Tertiary,
        RoadClass::Unclassified,
        RoadClass::Residential,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoadClass::Motorway => "motorway",
            RoadClass::Trunk => "trunk",
            RoadClass::Primary => "primary",
            RoadClass::Secondary => "secondary",
            RoadClass::Tertiary => "tertiary",
            RoadClass::Unclassified => "unclassified",
            RoadClass::Residential => "residential",
        }
    }
}

impl fmt::Display for RoadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoadClass {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        RoadClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub id: String,
    pub path: Vec<Point>,
    pub road_class: RoadClass,
    pub lanes: Option<u32>,
    /// km/h
    pub maxspeed: Option<f64>,
    pub name: Option<String>,
}

impl RoadSegment {
    pub fn length(&self) -> f64 {
        self.path.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    pub fn length_in_disk(&self, center: Point, radius: f64) -> f64 {
        geom::polyline_length_in_disk(&self.path, center, radius)
    }
}

impl Spatial for RoadSegment {
    fn bbox(&self) -> BBox {
        BBox::from_points(&self.path)
    }

    fn intersects_disk(&self, center: Point, radius: f64) -> bool {
        BBox::from_points(&self.path).intersects_disk(center, radius)
            && geom::polyline_intersects_disk(&self.path, center, radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPolygon {
    pub polygon: Polygon,
    pub label: EnvironmentClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CityDataset {
    /// Sorted by id.
    pub buildings: Vec<BuildingFootprint>,
    /// Sorted by id.
    pub roads: Vec<RoadSegment>,
    /// Convex hull of every building vertex.
    pub boundary: Polygon,
    pub projection: Projection,
    pub crs_note: String,
}

/// Outcome of loading one file: kept items plus what was discarded.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    /// Features with missing or invalid geometry.
    pub skipped: usize,
    /// Valid features removed by an attribute filter (road class).
    pub filtered: usize,
}

/// Numeric attribute that may arrive as a JSON number or as text.
fn numeric(v: Option<&Value>) -> Option<f64> {
    match v? {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .filter(|x| x.is_finite())
}

pub(crate) fn parse_height(v: Option<&Value>) -> Option<f64> {
    numeric(v).filter(|h| *h > 0.0 && *h < 1000.0)
}

/// Lane count; multi-valued tags such as `"2;3"` are left absent.
pub(crate) fn parse_lanes(v: Option<&Value>) -> Option<u32> {
    let x = numeric(v)?;
    (x >= 1.0 && x.fract() == 0.0 && x <= 64.0).then_some(x as u32)
}

/// Speed limit in km/h. Accepts plain numbers and an explicit `mph` suffix.
pub(crate) fn parse_maxspeed(v: Option<&Value>) -> Option<f64> {
    let kmh = match v? {
        Value::String(s) => {
            let s = s.trim();
            if let Some(mph) = s.strip_suffix("mph") {
                mph.trim().parse::<f64>().ok().map(|x| x * 1.609344)
            } else {
                s.strip_suffix("km/h").unwrap_or(s).trim().parse::<f64>().ok()
            }
        }
        other => numeric(Some(other)),
    }?;
    (kmh.is_finite() && kmh > 0.0).then_some(kmh)
}

fn project_ring(ring: &[(f64, f64)], proj: &Projection) -> Result<Vec<Point>> {
    ring.iter().map(|&(lon, lat)| proj.project(lon, lat)).collect()
}

fn project_polygon(rings: &[Vec<(f64, f64)>], proj: &Projection) -> Result<Polygon> {
    let (exterior, holes) = rings
        .split_first()
        .ok_or_else(|| Error::Geometry("polygon without rings".into()))?;
    let holes = holes
        .iter()
        .map(|h| project_ring(h, proj))
        .collect::<Result<Vec<_>>>()?;
    Polygon::new(project_ring(exterior, proj)?, holes)
}

/// Polygon parts of a feature, or `None` if the geometry is not areal or is malformed.
fn polygon_parts(f: &RawFeature) -> Option<(bool, Vec<Vec<Vec<(f64, f64)>>>)> {
    let coords = f.coordinates()?;
    match f.geometry_type()? {
        "Polygon" => Some((false, vec![geojson::polygon_rings(coords)?])),
        "MultiPolygon" => {
            let parts = coords
                .as_array()?
                .iter()
                .map(geojson::polygon_rings)
                .collect::<Option<Vec<_>>>()?;
            Some((true, parts))
        }
        _ => None,
    }
}

/// Loads building footprints. MultiPolygon parts become separate footprints
/// with ids `<feature id>#<part>`.
pub fn load_buildings(path: &Path, proj: &Projection, height_key: &str) -> Result<Loaded<BuildingFootprint>> {
    let (_, features) = geojson::read_feature_collection(path)?;
    let mut items = Vec::new();
    let mut skipped = 0;
    for f in &features {
        let Some((multi, parts)) = polygon_parts(f) else {
            skipped += 1;
            continue;
        };
        let base = f.id_or_index();
        let height = parse_height(f.properties.get(height_key));
        for (k, rings) in parts.iter().enumerate() {
            match project_polygon(rings, proj) {
                Ok(footprint) => items.push(BuildingFootprint {
                    id: if multi { format!("{base}#{k}") } else { base.clone() },
                    footprint,
                    height,
                }),
                Err(_) => skipped += 1,
            }
        }
    }
    if skipped > 0 {
        warn!("{}: skipped {skipped} building features with invalid geometry", path.display());
    }
    if items.is_empty() {
        return Err(Error::ingest(path, "no valid building features"));
    }
    Ok(Loaded {
        items,
        skipped,
        filtered: 0,
    })
}

/// Loads road centre lines, keeping only the seven classes in [`RoadClass`].
pub fn load_roads(path: &Path, proj: &Projection) -> Result<Loaded<RoadSegment>> {
    let (_, features) = geojson::read_feature_collection(path)?;
    let mut items = Vec::new();
    let mut skipped = 0;
    let mut filtered = 0;
    let mut valid = 0;
    for f in &features {
        let lines = match (f.geometry_type(), f.coordinates()) {
            (Some("LineString"), Some(c)) => geojson::positions(c).map(|p| vec![p]),
            (Some("MultiLineString"), Some(c)) => c
                .as_array()
                .and_then(|a| a.iter().map(geojson::positions).collect::<Option<Vec<_>>>()),
            _ => None,
        };
        let Some(lines) = lines else {
            skipped += 1;
            continue;
        };
        let multi = lines.len() > 1;
        let base = f.id_or_index();
        let class = f
            .properties
            .get("highway")
            .and_then(Value::as_str)
            .and_then(|s| s.parse::<RoadClass>().ok());
        for (k, line) in lines.iter().enumerate() {
            let path = match project_ring(line, proj) {
                Ok(mut p) => {
                    p.dedup();
                    p
                }
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
            if path.len() < 2 {
                skipped += 1;
                continue;
            }
            valid += 1;
            let Some(road_class) = class else {
                filtered += 1;
                continue;
            };
            items.push(RoadSegment {
                id: if multi { format!("{base}#{k}") } else { base.clone() },
                path,
                road_class,
                lanes: parse_lanes(f.properties.get("lanes")),
                maxspeed: parse_maxspeed(f.properties.get("maxspeed")),
                name: f.properties.get("name").and_then(Value::as_str).map(str::to_owned),
            });
        }
    }
    if skipped > 0 {
        warn!("{}: skipped {skipped} road features with invalid geometry", path.display());
    }
    if valid == 0 {
        return Err(Error::ingest(path, "no valid road features"));
    }
    if items.is_empty() {
        warn!("{}: every road was outside the retained highway classes", path.display());
    }
    Ok(Loaded {
        items,
        skipped,
        filtered,
    })
}

/// Loads training polygons with an `env_class` property of RES, ULR or UHR.
pub fn load_labeled_polygons(path: &Path, proj: &Projection) -> Result<Vec<LabeledPolygon>> {
    let (_, features) = geojson::read_feature_collection(path)?;
    let mut out = Vec::new();
    let mut skipped = 0;
    for f in &features {
        let raw = f.properties.get("env_class");
        let label = raw
            .and_then(Value::as_str)
            .and_then(|s| s.parse::<EnvironmentClass>().ok())
            .filter(|c| c.is_training_label())
            .ok_or_else(|| {
                Error::ingest(
                    path,
                    format!(
                        "feature {} has env_class {}, expected one of RES, ULR, UHR",
                        f.index,
                        raw.map_or("<missing>".to_string(), Value::to_string)
                    ),
                )
            })?;
        let Some((_, parts)) = polygon_parts(f) else {
            skipped += 1;
            continue;
        };
        for rings in &parts {
            match project_polygon(rings, proj) {
                Ok(polygon) => out.push(LabeledPolygon { polygon, label }),
                Err(_) => skipped += 1,
            }
        }
    }
    if skipped > 0 {
        warn!("{}: skipped {skipped} label features with invalid geometry", path.display());
    }
    if out.is_empty() {
        return Err(Error::ingest(path, "no valid labelled polygons"));
    }
    Ok(out)
}

/// Assembles a dataset with the convex hull of all building vertices as boundary.
pub fn build_city_dataset(
    mut buildings: Vec<BuildingFootprint>,
    mut roads: Vec<RoadSegment>,
    projection: Projection,
) -> Result<CityDataset> {
    let vertices: Vec<Point> = buildings
        .iter()
        .flat_map(|b| b.footprint.vertices().iter().copied())
        .collect();
    let boundary = convex_hull(&vertices).map_err(|e| Error::Projection(format!("cannot build city boundary: {e}")))?;
    buildings.sort_by(|a, b| a.id.cmp(&b.id));
    roads.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(CityDataset {
        buildings,
        roads,
        boundary,
        crs_note: projection.crs_note(),
        projection,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub buildings_kept: usize,
    pub buildings_skipped: usize,
    pub roads_kept: usize,
    pub roads_skipped: usize,
    pub roads_dropped_by_class: usize,
    pub projection: Projection,
}

/// Loads buildings and roads into one dataset sharing a resolved projection.
pub fn ingest_city(buildings: &Path, roads: &Path, spec: &ProjectionSpec) -> Result<(CityDataset, IngestSummary)> {
    let projection = spec.resolve(buildings)?;
    let b = load_buildings(buildings, &projection, &spec.height_key)?;
    let r = load_roads(roads, &projection)?;
    let summary = IngestSummary {
        buildings_kept: b.items.len(),
        buildings_skipped: b.skipped,
        roads_kept: r.items.len(),
        roads_skipped: r.skipped,
        roads_dropped_by_class: r.filtered,
        projection,
    };
    let city = build_city_dataset(b.items, r.items, projection).map_err(|e| Error::ingest(buildings, e.to_string()))?;
    Ok((city, summary))
}
