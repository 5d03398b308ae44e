//! Random forest classifier: bagged CART trees with per-node feature sampling.
//!
//! Training is deterministic for a given seed. Tree `i` draws from a ChaCha8
//! stream `i` seeded with the forest seed, so the result does not depend on
//! how many threads grow the trees.

mod io;
mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EnvironmentClass, FeatureVector, SamplePoint, FEATURE_NAMES, N_FEATURES};

pub use io::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use tree::{best_split, gini, Split, Tree, TreeNode};

/// Row-major feature matrix with class indices.
#[derive(Debug, Clone)]
pub struct TrainingData {
    n_features: usize,
    n_classes: usize,
    x: Vec<f64>,
    y: Vec<usize>,
}

impl TrainingData {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: &[usize], n_classes: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Forest(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::Forest("no training rows".into()));
        }
        if n_classes == 0 {
            return Err(Error::Forest("need at least one class".into()));
        }
        let n_features = rows[0].as_ref().len();
        if n_features == 0 {
            return Err(Error::Forest("rows have no features".into()));
        }
        let mut x = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_features {
                return Err(Error::Forest(format!(
                    "row {i} has {} features, expected {n_features}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Forest(format!("row {i} feature {j} is not finite")));
            }
            x.extend_from_slice(row);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Forest(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(TrainingData {
            n_features,
            n_classes,
            x,
            y: labels.to_vec(),
        })
    }

    /// Labelled samples with the 12 morphology features. Unlabelled or OPEN
    /// samples are an error.
    pub fn from_samples(samples: &[SamplePoint]) -> Result<Self> {
        let mut rows = Vec::with_capacity(samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let label = s
                .label
                .and_then(EnvironmentClass::index)
                .ok_or_else(|| Error::Forest(format!("sample {i} has no training label")))?;
            rows.push(s.features.to_array());
            labels.push(label);
        }
        TrainingData::from_rows(&rows, &labels, EnvironmentClass::TRAINING.len())
    }

    /// Copy keeping only the listed feature columns, in the given order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() || columns.iter().any(|&c| c >= self.n_features) {
            return Err(Error::Forest(format!("invalid feature selection {columns:?}")));
        }
        let rows: Vec<Vec<f64>> = (0..self.len())
            .map(|r| columns.iter().map(|&c| self.value(r, c)).collect())
            .collect();
        TrainingData::from_rows(&rows, &self.y, self.n_classes)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.n_features..(r + 1) * self.n_features]
    }

    pub fn value(&self, r: usize, f: usize) -> f64 {
        self.x[r * self.n_features + f]
    }

    pub fn label(&self, r: usize) -> usize {
        self.y[r]
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features drawn per node; `None` means ⌊√n_features⌋.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Forest("n_trees must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Forest("min_samples_split must be at least 2".into()));
        }
        if let Some(k) = self.features_per_split {
            if k == 0 || k > n_features {
                return Err(Error::Forest(format!(
                    "features_per_split must be in 1..={n_features}, got {k}"
                )));
            }
        }
        Ok(())
    }

    pub fn resolved_features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub(crate) trees: Vec<Tree>,
    pub(crate) n_features: usize,
    pub(crate) n_classes: usize,
    pub(crate) feature_names: Vec<String>,
    pub(crate) importances: Vec<f64>,
    pub(crate) config: ForestConfig,
    pub(crate) train_seed: u64,
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Mean decrease in impurity per feature, normalised to sum to 1 (all
    /// zeros if no tree ever split).
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    /// Number of trees voting for each class.
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        assert_eq!(x.len(), self.n_features, "feature count mismatch");
        let mut votes = vec![0; self.n_classes];
        for t in &self.trees {
            votes[t.vote(x)] += 1;
        }
        votes
    }

    /// Majority vote; ties go to the lowest class index.
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let votes: Vec<u64> = self.votes(x).into_iter().map(|v| v as u64).collect();
        tree::argmax(&votes)
    }

    /// Fraction of trees voting for each class.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let n = self.trees.len() as f64;
        self.votes(x).into_iter().map(|v| v as f64 / n).collect()
    }

    /// Environment class of a morphology feature vector.
    pub fn predict(&self, fv: &FeatureVector) -> Result<EnvironmentClass> {
        if self.n_features != N_FEATURES || self.n_classes != EnvironmentClass::TRAINING.len() {
            return Err(Error::Forest(format!(
                "model has {} features and {} classes, not a morphology classifier",
                self.n_features, self.n_classes
            )));
        }
        let i = self.predict_index(&fv.to_array());
        Ok(EnvironmentClass::from_index(i).expect("class index in range"))
    }
}

fn bootstrap_sample<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, u64)> {
    let mut weights = vec![0u64; n];
    for _ in 0..n {
        weights[rng.random_range(0..n)] += 1;
    }
    weights
        .into_iter()
        .enumerate()
        .filter(|&(_, w)| w > 0)
        .collect()
}

/// Trains a forest. `feature_names` must have one entry per column.
pub fn train(data: &TrainingData, cfg: &ForestConfig, feature_names: &[&str]) -> Result<ForestModel> {
    cfg.validate(data.n_features())?;
    if feature_names.len() != data.n_features() {
        return Err(Error::Forest(format!(
            "{} feature names for {} features",
            feature_names.len(),
            data.n_features()
        )));
    }
    let params = tree::GrowParams {
        max_depth: cfg.max_depth,
        min_samples_split: cfg.min_samples_split as u64,
        features_per_split: cfg.resolved_features_per_split(data.n_features()),
    };
    let grown: Vec<(Tree, Vec<f64>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let samples = if cfg.bootstrap {
                bootstrap_sample(data.len(), &mut rng)
            } else {
                (0..data.len()).map(|r| (r, 1)).collect()
            };
            let mut imp = vec![0.0; data.n_features()];
            let t = tree::grow(data, samples, &params, &mut rng, &mut imp);
            (t, imp)
        })
        .collect();

    let mut importances = vec![0.0; data.n_features()];
    let mut trees = Vec::with_capacity(grown.len());
    for (t, imp) in grown {
        for (acc, v) in importances.iter_mut().zip(imp) {
            *acc += v;
        }
        trees.push(t);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    log::debug!("trained {} trees on {} rows", trees.len(), data.len());
    Ok(ForestModel {
        trees,
        n_features: data.n_features(),
        n_classes: data.n_classes(),
        feature_names: feature_names.iter().map(|s| s.to_string()).collect(),
        importances,
        config: cfg.clone(),
        train_seed: cfg.seed,
    })
}

/// Trains the environment classifier on labelled morphology samples.
pub fn train_environment_forest(samples: &[SamplePoint], cfg: &ForestConfig) -> Result<ForestModel> {
    let data = TrainingData::from_samples(samples)?;
    train(&data, cfg, &FEATURE_NAMES)
}
