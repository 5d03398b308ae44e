//! Applies a trained classifier over a city grid and writes the resulting
//! morphology map as GeoJSON and SVG.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{write_file, Error, Result};
use crate::features::{compute_features_many, generate_grid, EnvironmentClass, GridConfig};
use crate::forest::ForestModel;
use crate::geojson;
use crate::geom::{BBox, Point};
use crate::ingest::{CityDataset, Projection};
use crate::svg::{Palette, SvgDoc};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub location: Point,
    pub class: EnvironmentClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologyMap {
    /// Lattice anchor; every cell sits at `origin + spacing · (i, j)`.
    pub origin: Point,
    pub spacing: f64,
    pub cells: Vec<MapCell>,
    /// SHA-256 of the serialized model, hex encoded.
    pub model_id: String,
    pub crs_note: String,
    pub projection: Projection,
}

impl MorphologyMap {
    /// Cell counts in RES, ULR, UHR, OPEN order.
    pub fn class_counts(&self) -> [usize; 4] {
        let mut n = [0; 4];
        for c in &self.cells {
            n[EnvironmentClass::ALL.iter().position(|k| *k == c.class).expect("known class")] += 1;
        }
        n
    }

    /// Bounding box of the cell squares.
    pub fn extent(&self) -> BBox {
        let h = self.spacing / 2.0;
        let mut bb = BBox::EMPTY;
        for c in &self.cells {
            bb = bb
                .extend(Point::new(c.location.x - h, c.location.y - h))
                .extend(Point::new(c.location.x + h, c.location.y + h));
        }
        bb
    }
}

/// Hex SHA-256 of the model's JSON serialization, which is exactly the
/// content of a saved model file.
pub fn model_id(model: &ForestModel) -> Result<String> {
    Ok(hex::encode(Sha256::digest(model.to_json_bytes()?)))
}

/// Classes for arbitrary points. Points with fewer than `cfg.min_buildings`
/// buildings in their buffer are OPEN.
pub fn classify_points(
    points: &[Point],
    city: &CityDataset,
    model: &ForestModel,
    cfg: &GridConfig,
) -> Result<Vec<EnvironmentClass>> {
    let features = compute_features_many(points, city, cfg);
    features
        .par_iter()
        .map(|fv| {
            if fv.building_count < cfg.min_buildings as f64 {
                Ok(EnvironmentClass::Open)
            } else {
                model.predict(fv)
            }
        })
        .collect()
}

/// Classifies every lattice point inside the city boundary.
pub fn classify_city(city: &CityDataset, model: &ForestModel, cfg: &GridConfig) -> Result<MorphologyMap> {
    cfg.validate()?;
    let points = generate_grid(&city.boundary, cfg);
    if points.is_empty() {
        return Err(Error::Map("city boundary contains no grid points".into()));
    }
    let classes = classify_points(&points, city, model, cfg)?;
    let bb = city.boundary.bbox();
    Ok(MorphologyMap {
        origin: Point::new(bb.min_x, bb.min_y),
        spacing: cfg.spacing,
        cells: points
            .into_iter()
            .zip(classes)
            .map(|(location, class)| MapCell { location, class })
            .collect(),
        model_id: model_id(model)?,
        crs_note: city.crs_note.clone(),
        projection: city.projection,
    })
}

fn check_nonempty(map: &MorphologyMap) -> Result<()> {
    if map.cells.is_empty() {
        return Err(Error::Map("map has no cells".into()));
    }
    Ok(())
}

/// Planar corners of a cell square, counter-clockwise and closed.
pub fn cell_square(center: Point, spacing: f64) -> [Point; 5] {
    let h = spacing / 2.0;
    let (x, y) = (center.x, center.y);
    [
        Point::new(x - h, y - h),
        Point::new(x + h, y - h),
        Point::new(x + h, y + h),
        Point::new(x - h, y + h),
        Point::new(x - h, y - h),
    ]
}

/// FeatureCollection of lon/lat cell squares with an `env_class` property.
/// The planar cell centre is kept in `x`/`y` and map metadata in a
/// top-level `morphology` member so the map can be read back exactly.
pub fn map_to_geojson(map: &MorphologyMap) -> Result<Value> {
    check_nonempty(map)?;
    let features = map
        .cells
        .iter()
        .map(|c| {
            let ring: Vec<(f64, f64)> = cell_square(c.location, map.spacing)
                .iter()
                .map(|p| map.projection.unproject(*p))
                .collect();
            let mut props = Map::new();
            props.insert("env_class".into(), json!(c.class.code()));
            props.insert("x".into(), json!(c.location.x));
            props.insert("y".into(), json!(c.location.y));
            geojson::feature(geojson::polygon_geometry(&ring), props)
        })
        .collect();
    let mut extra = Map::new();
    extra.insert(
        "morphology".into(),
        json!({
            "origin": [map.origin.x, map.origin.y],
            "spacing": map.spacing,
            "model_id": map.model_id,
            "crs_note": map.crs_note,
            "projection": map.projection,
        }),
    );
    Ok(geojson::feature_collection(features, extra))
}

pub fn emit_geojson(map: &MorphologyMap, path: &Path) -> Result<()> {
    write_file(path, &geojson::to_bytes(&map_to_geojson(map)?)?)
}

fn map_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Map(format!("{}: {msg}", path.display()))
}

/// Reads a map written by [`emit_geojson`].
pub fn read_geojson_map(path: &Path) -> Result<MorphologyMap> {
    let (root, features) = geojson::read_feature_collection(path).map_err(|e| map_err(path, e))?;
    let meta = root
        .get("morphology")
        .ok_or_else(|| map_err(path, "missing morphology metadata"))?;
    #[derive(Deserialize)]
    struct Meta {
        origin: (f64, f64),
        spacing: f64,
        model_id: String,
        crs_note: String,
        projection: Projection,
    }
    let meta: Meta = serde_json::from_value(meta.clone()).map_err(|e| map_err(path, e))?;
    let cells = features
        .iter()
        .map(|f| {
            let num = |k: &str| {
                f.properties
                    .get(k)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| map_err(path, format!("feature {} lacks {k}", f.index)))
            };
            let class = f
                .properties
                .get("env_class")
                .and_then(Value::as_str)
                .ok_or_else(|| map_err(path, format!("feature {} lacks env_class", f.index)))?
                .parse::<EnvironmentClass>()
                .map_err(|e| map_err(path, e))?;
            Ok(MapCell {
                location: Point::new(num("x")?, num("y")?),
                class,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MorphologyMap {
        origin: Point::new(meta.origin.0, meta.origin.1),
        spacing: meta.spacing,
        cells,
        model_id: meta.model_id,
        crs_note: meta.crs_note,
        projection: meta.projection,
    })
}

/// Map picture: one square per cell, north up, with a four-class legend.
pub fn map_svg(map: &MorphologyMap, palette: &Palette) -> Result<String> {
    check_nonempty(map)?;
    let bb = map.extent();
    let (margin, legend_w, target) = (20.0, 100.0, 800.0);
    let scale = target / bb.width().max(bb.height());
    let (w, h) = (bb.width() * scale, bb.height() * scale);
    let mut doc = SvgDoc::new(w + 2.0 * margin + legend_w, (h + 2.0 * margin).max(120.0));
    let side = map.spacing * scale;
    doc.group_start("cells");
    for c in &map.cells {
        let x = margin + (c.location.x - map.spacing / 2.0 - bb.min_x) * scale;
        let y = margin + (bb.max_y - c.location.y - map.spacing / 2.0) * scale;
        doc.rect(x, y, side, side, palette.color(c.class));
    }
    doc.group_end();
    doc.legend(w + 2.0 * margin, margin, palette, &EnvironmentClass::ALL);
    Ok(doc.finish())
}

pub fn emit_svg(map: &MorphologyMap, path: &Path, palette: &Palette) -> Result<()> {
    write_file(path, map_svg(map, palette)?.as_bytes())
}
