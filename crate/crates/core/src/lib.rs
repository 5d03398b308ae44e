//! Urban morphology maps for short-range outdoor propagation planning.
//!
//! The pipeline turns building footprints and road centre lines into a grid of
//! neighbourhood statistics, classifies every grid point as residential, urban
//! low-rise or urban high-rise with a random forest, and uses the resulting map
//! to pick the site-general path-loss scenario for a radio link.

pub mod error;
pub mod evalx;
pub mod features;
pub mod forest;
pub mod geojson;
pub mod geom;
pub mod ingest;
pub mod mapgen;
pub mod pathloss;
pub mod svg;
pub mod synthcity;

pub use error::{Error, Result};
pub use features::{EnvironmentClass, FeatureVector, GridConfig, SamplePoint, FEATURE_NAMES, N_FEATURES};
pub use forest::{ForestConfig, ForestModel};
pub use geom::{BBox, Point, Polygon, SpatialIndex};
pub use ingest::{BuildingFootprint, CityDataset, LabeledPolygon, Projection, ProjectionSpec, RoadClass, RoadSegment};
pub use mapgen::MorphologyMap;
pub use pathloss::{PathLossParams, Situation};
pub use svg::Palette;
