//! JSON model files. Trees are written as nested `{f, t, l, r}` split objects
//! with `{counts}` leaves.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForestConfig, ForestModel, Tree, TreeNode};
use crate::error::{read_file, write_file, Error, Result};

pub const MODEL_FORMAT_VERSION: &str = "1";

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonNode {
    Split {
        f: usize,
        t: f64,
        l: Box<JsonNode>,
        r: Box<JsonNode>,
    },
    Leaf {
        counts: Vec<u64>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: String,
    n_features: usize,
    n_classes: usize,
    feature_names: Vec<String>,
    importances: Vec<f64>,
    config: ForestConfig,
    train_seed: u64,
    trees: Vec<JsonNode>,
}

fn to_json(tree: &Tree, i: usize) -> JsonNode {
    match &tree.nodes[i] {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => JsonNode::Split {
            f: *feature,
            t: *threshold,
            l: Box::new(to_json(tree, *left)),
            r: Box::new(to_json(tree, *right)),
        },
        TreeNode::Leaf { counts } => JsonNode::Leaf {
            counts: counts.clone(),
        },
    }
}

fn from_json(node: JsonNode, n_features: usize, n_classes: usize) -> Result<Tree> {
    let mut nodes = Vec::new();
    let mut stack = vec![(node, None::<(usize, bool)>)];
    while let Some((node, parent)) = stack.pop() {
        let id = nodes.len();
        if let Some((p, is_left)) = parent {
            if let TreeNode::Split { left, right, .. } = &mut nodes[p] {
                if is_left {
                    *left = id;
                } else {
                    *right = id;
                }
            }
        }
        match node {
            JsonNode::Split { f, t, l, r } => {
                if f >= n_features || !t.is_finite() {
                    return Err(Error::ModelIo(format!("invalid split on feature {f} at {t}")));
                }
                nodes.push(TreeNode::Split {
                    feature: f,
                    threshold: t,
                    left: 0,
                    right: 0,
                });
                stack.push((*r, Some((id, false))));
                stack.push((*l, Some((id, true))));
            }
            JsonNode::Leaf { counts } => {
                if counts.len() != n_classes {
                    return Err(Error::ModelIo(format!(
                        "leaf has {} class counts, expected {n_classes}",
                        counts.len()
                    )));
                }
                nodes.push(TreeNode::Leaf { counts });
            }
        }
    }
    Ok(Tree { nodes })
}

impl ForestModel {
    /// Serialized model; identical models give identical bytes.
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION.to_string(),
            n_features: self.n_features,
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            importances: self.importances.clone(),
            config: self.config.clone(),
            train_seed: self.train_seed,
            trees: self.trees.iter().map(|t| to_json(t, 0)).collect(),
        };
        let mut bytes = serde_json::to_vec(&file)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<ForestModel> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        de.disable_recursion_limit();
        let file = ModelFile::deserialize(&mut de)
            .and_then(|f| de.end().map(|_| f))
            .map_err(|e| Error::ModelIo(format!("cannot parse model: {e}")))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelIo(format!(
                "unsupported model version {:?}, expected {MODEL_FORMAT_VERSION:?}",
                file.version
            )));
        }
        if file.feature_names.len() != file.n_features || file.importances.len() != file.n_features {
            return Err(Error::ModelIo("feature name or importance count mismatch".into()));
        }
        if file.trees.is_empty() || file.n_classes == 0 {
            return Err(Error::ModelIo("model has no trees or no classes".into()));
        }
        let trees = file
            .trees
            .into_iter()
            .map(|t| from_json(t, file.n_features, file.n_classes))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForestModel {
            trees,
            n_features: file.n_features,
            n_classes: file.n_classes,
            feature_names: file.feature_names,
            importances: file.importances,
            config: file.config,
            train_seed: file.train_seed,
        })
    }
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<()> {
    write_file(path, &model.to_json_bytes()?)
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    let bytes = read_file(path).map_err(|e| Error::ModelIo(format!("{}: {e}", path.display())))?;
    ForestModel::from_json_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{train, TrainingData};

    fn model() -> ForestModel {
        let rows: Vec<[f64; 2]> = (0..60)
            .map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let labels: Vec<usize> = rows.iter().map(|r| usize::from(r[0] + r[1] > 0.2)).collect();
        let d = TrainingData::from_rows(&rows, &labels, 2).unwrap();
        let cfg = ForestConfig {
            n_trees: 5,
            seed: 3,
            ..ForestConfig::default()
        };
        train(&d, &cfg, &["a", "b"]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = m.to_json_bytes().unwrap();
        let back = ForestModel::from_json_bytes(&bytes).unwrap();
        assert_eq!(back.to_json_bytes().unwrap(), bytes);
        assert_eq!(back, m);
        for i in 0..40 {
            let x = [(i as f64 * 0.11).sin(), (i as f64 * 0.5).cos()];
            assert_eq!(back.predict_proba(&x), m.predict_proba(&x));
        }
    }

    #[test]
    fn rejects_bad_files() {
        let bytes = model().to_json_bytes().unwrap();
        assert!(ForestModel::from_json_bytes(&bytes[..bytes.len() / 2]).is_err());
        let text = String::from_utf8(bytes).unwrap();
        let wrong = text.replacen("\"version\":\"1\"", "\"version\":\"9\"", 1);
        assert!(matches!(ForestModel::from_json_bytes(wrong.as_bytes()), Err(Error::ModelIo(_))));
    }

    #[test]
    fn deep_trees_load() {
        let depth = 3000;
        let mut s = String::from("{\"version\":\"1\",\"n_features\":1,\"n_classes\":2,\"feature_names\":[\"a\"],\"importances\":[1.0],\"config\":{},\"train_seed\":0,\"trees\":[");
        for i in 0..depth {
            s.push_str(&format!("{{\"f\":0,\"t\":{i}.5,\"l\":{{\"counts\":[1,0]}},\"r\":"));
        }
        s.push_str("{\"counts\":[0,1]}");
        s.push_str(&"}".repeat(depth));
        s.push_str("]}");
        let m = std::thread::Builder::new()
            .stack_size(256 << 20)
            .spawn(move || ForestModel::from_json_bytes(s.as_bytes()).map(|m| m.trees[0].depth()))
            .unwrap()
            .join()
            .unwrap()
            .unwrap();
        assert_eq!(m, depth);
    }
}
