//! CART classification trees grown on Gini impurity.
//!
//! Samples carry integer weights so a bootstrap resample is represented by
//! multiplicities instead of copies. Split scores are compared as exact
//! rationals, which makes the tie-break (lowest feature index, then lowest
//! threshold) independent of floating-point rounding.

use rand::seq::SliceRandom;
use rand::Rng;

use super::TrainingData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u64>,
    },
}

/// A fitted tree stored as an arena; node 0 is the root. Equality compares
/// tree structure, not arena layout.
#[derive(Debug, Clone)]
pub struct Tree {
    pub(crate) nodes: Vec<TreeNode>,
}

impl PartialEq for Tree {
    fn eq(&self, other: &Tree) -> bool {
        if self.nodes.len() != other.nodes.len() {
            return false;
        }
        let mut stack = vec![(0, 0)];
        while let Some((a, b)) = stack.pop() {
            match (&self.nodes[a], &other.nodes[b]) {
                (
                    TreeNode::Split { feature: fa, threshold: ta, left: la, right: ra },
                    TreeNode::Split { feature: fb, threshold: tb, left: lb, right: rb },
                ) => {
                    if fa != fb || ta.to_bits() != tb.to_bits() {
                        return false;
                    }
                    stack.push((*la, *lb));
                    stack.push((*ra, *rb));
                }
                (TreeNode::Leaf { counts: ca }, TreeNode::Leaf { counts: cb }) => {
                    if ca != cb {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }
}

/// Index of the largest count; ties go to the lowest index.
pub(crate) fn argmax(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Class counts of the leaf reached by `x`. Goes left when `x[f] <= threshold`.
    pub fn leaf_counts(&self, x: &[f64]) -> &[u64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    /// The class this tree votes for.
    pub fn vote(&self, x: &[f64]) -> usize {
        argmax(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// Gini impurity `1 − Σ pᵢ²`.
pub fn gini(counts: &[u64]) -> Result<f64> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Forest("gini impurity of an empty node".into()));
    }
    let n = n as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Gini decrease at the node: parent impurity minus the size-weighted
    /// impurity of the children.
    pub impurity_decrease: f64,
}

/// `num / den` with both parts exact.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    fn gt(self, other: Ratio) -> bool {
        self.num * other.den > other.num * self.den
    }
}

fn sum_sq(counts: &[u64]) -> u128 {
    counts.iter().map(|&c| c as u128 * c as u128).sum()
}

struct Candidate {
    threshold: f64,
    /// Σ left² / n_left + Σ right² / n_right; larger means purer children.
    score: Ratio,
}

/// Best threshold on one feature, or `None` when the feature is constant on
/// these samples (the outer `Option`), or has no admissible split (inner).
fn best_threshold(
    data: &TrainingData,
    samples: &[(usize, u64)],
    feature: usize,
    parent: &[u64],
    total: u64,
    scratch: &mut Vec<(f64, usize, u64)>,
) -> Option<Option<Candidate>> {
    scratch.clear();
    scratch.extend(
        samples
            .iter()
            .map(|&(row, w)| (data.value(row, feature), data.label(row), w)),
    );
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    if scratch.first()?.0 == scratch.last()?.0 {
        return None;
    }
    let mut left = vec![0u64; parent.len()];
    let mut right = parent.to_vec();
    let mut n_left = 0u64;
    let mut best: Option<Candidate> = None;
    for i in 0..scratch.len() - 1 {
        let (v, class, w) = scratch[i];
        left[class] += w;
        right[class] -= w;
        n_left += w;
        let next = scratch[i + 1].0;
        if v >= next {
            continue;
        }
        let n_right = (total - n_left) as u128;
        let n_l = n_left as u128;
        let score = Ratio {
            num: sum_sq(&left) * n_right + sum_sq(&right) * n_l,
            den: n_l * n_right,
        };
        if best.as_ref().map_or(true, |b| score.gt(b.score)) {
            let mut threshold = v / 2.0 + next / 2.0;
            if threshold >= next || threshold < v {
                threshold = v;
            }
            best = Some(Candidate { threshold, score });
        }
    }
    Some(best)
}

fn class_counts(data: &TrainingData, samples: &[(usize, u64)]) -> Vec<u64> {
    let mut counts = vec![0u64; data.n_classes()];
    for &(row, w) in samples {
        counts[data.label(row)] += w;
    }
    counts
}

/// Searches `features` in ascending index order and keeps the first maximum.
/// The returned split may have zero impurity decrease.
fn search(data: &TrainingData, samples: &[(usize, u64)], features: &[usize]) -> Option<Split> {
    let parent = class_counts(data, samples);
    let total: u64 = parent.iter().sum();
    if total == 0 {
        return None;
    }
    let parent_score = Ratio {
        num: sum_sq(&parent),
        den: total as u128,
    };
    let mut sorted = features.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut scratch = Vec::with_capacity(samples.len());
    let mut best: Option<(usize, Candidate)> = None;
    for &f in &sorted {
        let Some(Some(c)) = best_threshold(data, samples, f, &parent, total, &mut scratch) else {
            continue;
        };
        if best.as_ref().map_or(true, |(_, b)| c.score.gt(b.score)) {
            best = Some((f, c));
        }
    }
    let (feature, c) = best?;
    let n = total as f64;
    let score = c.score.num as f64 / c.score.den as f64;
    let decrease = score / n - parent_score.num as f64 / (n * n);
    Some(Split {
        feature,
        threshold: c.threshold,
        impurity_decrease: decrease.max(0.0),
    })
}

/// Best Gini split of `rows` over the candidate features. A row listed twice
/// counts twice. Thresholds are midpoints between consecutive distinct values;
/// ties go to the lower feature index and then the lower threshold. `None` if
/// no split strictly decreases impurity.
pub fn best_split(data: &TrainingData, rows: &[usize], candidate_features: &[usize]) -> Option<Split> {
    let mut sorted = rows.to_vec();
    sorted.sort_unstable();
    let mut weighted: Vec<(usize, u64)> = Vec::new();
    for r in sorted {
        match weighted.last_mut() {
            Some((last, w)) if *last == r => *w += 1,
            _ => weighted.push((r, 1)),
        }
    }
    search(data, &weighted, candidate_features).filter(|s| s.impurity_decrease > 0.0)
}

pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: u64,
    pub features_per_split: usize,
}

fn is_constant(data: &TrainingData, samples: &[(usize, u64)], f: usize) -> bool {
    let first = data.value(samples[0].0, f);
    samples.iter().all(|&(r, _)| data.value(r, f) == first)
}

/// Grows one tree. `importances` accumulates, per feature, the impurity
/// decrease of each split weighted by the node's share of the root samples.
pub(crate) fn grow<R: Rng>(
    data: &TrainingData,
    root_samples: Vec<(usize, u64)>,
    params: &GrowParams,
    rng: &mut R,
    importances: &mut [f64],
) -> Tree {
    let n_root: u64 = root_samples.iter().map(|s| s.1).sum();
    let mut nodes = vec![TreeNode::Leaf { counts: Vec::new() }];
    let mut pending = vec![(0usize, root_samples, 0usize)];
    let mut order: Vec<usize> = (0..data.n_features()).collect();

    while let Some((id, samples, depth)) = pending.pop() {
        let counts = class_counts(data, &samples);
        let n: u64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = params.max_depth.map_or(false, |d| depth >= d);
        let split = if pure || depth_reached || n < params.min_samples_split {
            None
        } else {
            // Visit features in random order until enough non-constant ones
            // have been drawn; constant features do not use up the budget.
            order.shuffle(rng);
            let mut chosen = Vec::with_capacity(params.features_per_split);
            for &f in &order {
                if chosen.len() == params.features_per_split {
                    break;
                }
                if !is_constant(data, &samples, f) {
                    chosen.push(f);
                }
            }
            // An impure node is split even when no cut lowers impurity on its
            // own (XOR-like patterns need a neutral first cut).
            search(data, &samples, &chosen)
        };

        let Some(split) = split else {
            nodes[id] = TreeNode::Leaf { counts };
            continue;
        };
        importances[split.feature] += n as f64 / n_root as f64 * split.impurity_decrease;
        let (left, right): (Vec<_>, Vec<_>) = samples
            .into_iter()
            .partition(|&(r, _)| data.value(r, split.feature) <= split.threshold);
        let l = nodes.len();
        nodes.push(TreeNode::Leaf { counts: Vec::new() });
        nodes.push(TreeNode::Leaf { counts: Vec::new() });
        nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: l + 1,
        };
        pending.push((l + 1, right, depth + 1));
        pending.push((l, left, depth + 1));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: &[&[f64]], labels: &[usize], k: usize) -> TrainingData {
        TrainingData::from_rows(rows, labels, k).unwrap()
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[4, 0, 0]).unwrap(), 0.0);
        assert!((gini(&[2, 2, 0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((gini(&[1, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(gini(&[0, 0, 0]).is_err());
    }

    #[test]
    fn one_dimensional_split() {
        let d = data(&[&[1.0], &[3.0]], &[0, 1], 2);
        let s = best_split(&d, &[0, 1], &[0]).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.0);
        assert!((s.impurity_decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_features_give_no_split() {
        let d = data(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]], &[0, 1, 0], 2);
        assert!(best_split(&d, &[0, 1, 2], &[0, 1]).is_none());
    }

    #[test]
    fn pure_node_gives_no_split() {
        let d = data(&[&[1.0], &[2.0], &[3.0]], &[1, 1, 1], 2);
        assert!(best_split(&d, &[0, 1, 2], &[0]).is_none());
    }

    #[test]
    fn ties_prefer_lower_feature_then_lower_threshold() {
        // Both features separate perfectly; feature 0 must win.
        let d = data(&[&[0.0, 10.0], &[1.0, 11.0]], &[0, 1], 2);
        assert_eq!(best_split(&d, &[0, 1], &[1, 0]).unwrap().feature, 0);
        // Symmetric labels: thresholds 1.5 and 2.5 score equally → 1.5.
        let d = data(&[&[1.0], &[2.0], &[3.0], &[4.0]], &[0, 1, 1, 0], 2);
        let s = best_split(&d, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!(s.threshold, 1.5);
    }

    #[test]
    fn duplicate_rows_act_as_weights() {
        // With row 0 counted three times the best cut isolates it.
        let d = data(&[&[0.0], &[1.0], &[2.0]], &[0, 1, 0], 2);
        let s = best_split(&d, &[0, 0, 0, 1, 2], &[0]).unwrap();
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn adjacent_floats_threshold_keeps_order() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let d = data(&[&[a], &[b]], &[0, 1], 2);
        let s = best_split(&d, &[0, 1], &[0]).unwrap();
        assert!(a <= s.threshold && s.threshold < b);
    }

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(argmax(&[5, 5, 1]), 0);
        assert_eq!(argmax(&[1, 5, 5]), 1);
        assert_eq!(argmax(&[0, 0, 0]), 0);
    }
}
