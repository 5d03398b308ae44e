//! Minimal GeoJSON (RFC 7946) reading and writing on top of `serde_json`.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{read_file, Error, Result};

/// One feature of a FeatureCollection, kept close to the wire form.
#[derive(Debug, Clone)]
pub struct RawFeature {
    /// Position in the collection.
    pub index: usize,
    pub id: Option<String>,
    pub geometry: Option<Value>,
    pub properties: Map<String, Value>,
}

impl RawFeature {
    pub fn geometry_type(&self) -> Option<&str> {
        self.geometry.as_ref()?.get("type")?.as_str()
    }

    pub fn coordinates(&self) -> Option<&Value> {
        self.geometry.as_ref()?.get("coordinates")
    }

    /// Feature id, falling back to an `id` property and then to the index.
    pub fn id_or_index(&self) -> String {
        self.id
            .clone()
            .or_else(|| self.properties.get("id").and_then(value_to_id))
            .unwrap_or_else(|| self.index.to_string())
    }
}

fn value_to_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub fn parse_feature_collection(path: &Path, bytes: &[u8]) -> Result<(Map<String, Value>, Vec<RawFeature>)> {
    let root: Value = serde_json::from_slice(bytes)
        .map_err(|e| Error::ingest(path, format!("malformed JSON: {e}")))?;
    let Value::Object(mut root) = root else {
        return Err(Error::ingest(path, "top-level value is not an object"));
    };
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::ingest(path, "not a GeoJSON FeatureCollection"));
    }
    let Some(Value::Array(features)) = root.remove("features") else {
        return Err(Error::ingest(path, "FeatureCollection has no features array"));
    };
    let features = features
        .into_iter()
        .enumerate()
        .map(|(index, f)| {
            let Value::Object(mut f) = f else {
                return Err(Error::ingest(path, format!("feature {index} is not an object")));
            };
            let properties = match f.remove("properties") {
                Some(Value::Object(m)) => m,
                _ => Map::new(),
            };
            Ok(RawFeature {
                index,
                id: f.get("id").and_then(value_to_id),
                geometry: f.remove("geometry").filter(|g| !g.is_null()),
                properties,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((root, features))
}

pub fn read_feature_collection(path: &Path) -> Result<(Map<String, Value>, Vec<RawFeature>)> {
    let bytes = read_file(path).map_err(|e| Error::ingest(path, format!("cannot read file: {e}")))?;
    parse_feature_collection(path, &bytes)
}

/// Parses a `[lon, lat, ...]` position.
pub fn position(v: &Value) -> Option<(f64, f64)> {
    let arr = v.as_array()?;
    if arr.len() < 2 {
        return None;
    }
    Some((arr[0].as_f64()?, arr[1].as_f64()?))
}

pub fn positions(v: &Value) -> Option<Vec<(f64, f64)>> {
    v.as_array()?.iter().map(position).collect()
}

/// Polygon coordinates: exterior ring followed by holes.
pub fn polygon_rings(v: &Value) -> Option<Vec<Vec<(f64, f64)>>> {
    v.as_array()?.iter().map(positions).collect()
}

pub fn ring_value(ring: &[(f64, f64)]) -> Value {
    Value::Array(ring.iter().map(|&(x, y)| json!([x, y])).collect())
}

pub fn feature(geometry: Value, properties: Map<String, Value>) -> Value {
    json!({
        "type": "Feature",
        "geometry": geometry,
        "properties": properties,
    })
}

pub fn polygon_geometry(exterior: &[(f64, f64)]) -> Value {
    json!({ "type": "Polygon", "coordinates": [ring_value(exterior)] })
}

pub fn linestring_geometry(path: &[(f64, f64)]) -> Value {
    json!({ "type": "LineString", "coordinates": ring_value(path) })
}

pub fn feature_collection(features: Vec<Value>, extra: Map<String, Value>) -> Value {
    let mut root = extra;
    root.insert("type".into(), Value::String("FeatureCollection".into()));
    root.insert("features".into(), Value::Array(features));
    Value::Object(root)
}

/// Compact serialization with a trailing newline. Object keys are sorted, so
/// identical values always produce identical bytes.
pub fn to_bytes(v: &Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}
