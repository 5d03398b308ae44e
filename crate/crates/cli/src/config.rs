use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use morphomap_core::evalx::DEFAULT_RESOLUTION;
use morphomap_core::{ForestConfig, GridConfig, Palette, ProjectionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub buildings: Option<PathBuf>,
    pub roads: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Defaults to `model.json` in the output directory.
    pub model: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Path-loss coefficient table; the built-in placeholder is used if unset.
    pub pathloss_params: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            buildings: None,
            roads: None,
            labels: None,
            model: None,
            output_dir: PathBuf::from("out"),
            pathloss_params: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub train_fraction: f64,
    pub split_seed: u64,
    pub stratified: bool,
    pub boundary_resolution: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_fraction: 0.7,
            split_seed: 0,
            stratified: true,
            boundary_resolution: DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub projection: ProjectionSpec,
    pub grid: GridConfig,
    pub forest: ForestConfig,
    pub evaluation: EvalConfig,
    pub palette: Palette,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads a JSON config. Relative paths inside it are taken relative to
    /// the directory holding the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for slot in [&mut p.buildings, &mut p.roads, &mut p.labels, &mut p.model, &mut p.pathloss_params]
            .into_iter()
            .flatten()
        {
            rebase(base, slot);
        }
        rebase(base, &mut p.output_dir);
        Ok(cfg)
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths
            .model
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("model.json"))
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.paths.output_dir.join(name)
    }
}

pub(crate) fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .with_context(|| format!("no input file configured for paths.{key}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"paths": {"buildings": "b.geojson", "model": "/abs/m.json"}, "forest": {"n_trees": 7}}"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.buildings.unwrap(), dir.path().join("b.geojson"));
        assert_eq!(cfg.paths.model.unwrap(), PathBuf::from("/abs/m.json"));
        assert_eq!(cfg.paths.output_dir, dir.path().join("out"));
        assert_eq!(cfg.forest.n_trees, 7);
        assert_eq!(cfg.evaluation.train_fraction, 0.7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"pahts": {}}"#).unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }
}
