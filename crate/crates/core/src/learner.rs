//! The meta-search evaluation function: a design featurizer and a regression
//! forest predicting the PHV a local search will reach when started from a
//! given design.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{evaluate_full, DesignEvaluation, EvalContext, ObjectiveSet};
use crate::topology::{CoreKind, Design};

/// Fixed-order numeric description of a design:
/// [case objective values] ++ [per-layer planar link counts (Z)] ++
/// [per-layer LLC counts (Z)] ++ [mean util, max util, mean CPU-LLC hops,
/// mean GPU-LLC hops].
pub type FeatureVector = Vec<f64>;

/// Feature length for a given case and layer count.
pub fn feature_len(case: &ObjectiveSet, layers: usize) -> usize {
    case.len() + 2 * layers + 4
}

/// Builds the feature vector from a full evaluation, so the routing pass is
/// shared with objective evaluation and costs one budget unit total.
pub fn features_from_evaluation(design: &Design, eval: &DesignEvaluation) -> FeatureVector {
    let mut f = eval.objectives.values().to_vec();
    f.extend(design.planar_links_per_layer().iter().map(|c| *c as f64));
    f.extend(design.kind_per_layer(CoreKind::Llc).iter().map(|c| *c as f64));
    f.push(eval.util_mean);
    f.push(eval.util_max);
    f.push(eval.mean_cpu_llc_hops);
    f.push(eval.mean_gpu_llc_hops);
    f
}

/// Featurizes a design from scratch (one evaluation).
pub fn featurize(design: &Design, ctx: &EvalContext, case: &ObjectiveSet) -> Result<FeatureVector> {
    let eval = evaluate_full(design, ctx, case)?;
    Ok(features_from_evaluation(design, &eval))
}

/// Accumulated (features, target PHV) pairs across MOO-STAGE iterations.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingSet {
    pub features: Vec<FeatureVector>,
    pub targets: Vec<f64>,
}

impl TrainingSet {
    pub fn push(&mut self, features: FeatureVector, target: f64) {
        self.features.push(features);
        self.targets.push(target);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Forest hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_frac: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 50, max_depth: 12, min_leaf: 2, feature_frac: 0.7 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    idx = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Regression forest with mean-leaf trees trained on bootstrap resamples and
/// random feature subsets per split. Deterministic per seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalModel {
    trees: Vec<Tree>,
    n_features: usize,
    params: ForestParams,
}

/// Trains a forest by greedy SSE splitting. Tree growth parallelizes across
/// trees; each tree's RNG is derived from (seed, tree index) so thread count
/// cannot change the model.
pub fn train(data: &TrainingSet, params: &ForestParams, seed: u64) -> Result<EvalModel> {
    if data.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    if data.features.len() != data.targets.len() {
        return Err(Error::Training("features/targets length mismatch".into()));
    }
    let n_features = data.features[0].len();
    if data.features.iter().any(|f| f.len() != n_features) {
        return Err(Error::Training("inconsistent feature lengths".into()));
    }
    if !(0.0 < params.feature_frac && params.feature_frac <= 1.0) {
        return Err(Error::Training(format!(
            "feature_frac must be in (0, 1], got {}",
            params.feature_frac
        )));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::Training("n_trees and min_leaf must be positive".into()));
    }
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E3779B97F4A7C15));
            grow_tree(data, params, n_features, &mut rng)
        })
        .collect();
    Ok(EvalModel { trees, n_features, params: params.clone() })
}

fn grow_tree(data: &TrainingSet, params: &ForestParams, n_features: usize, rng: &mut ChaCha8Rng) -> Tree {
    let n = data.len();
    let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut nodes = Vec::new();
    build_node(data, params, n_features, &sample, 0, rng, &mut nodes);
    Tree { nodes }
}

fn mean_of(data: &TrainingSet, idx: &[usize]) -> f64 {
    idx.iter().map(|i| data.targets[*i]).sum::<f64>() / idx.len() as f64
}

fn build_node(
    data: &TrainingSet,
    params: &ForestParams,
    n_features: usize,
    idx: &[usize],
    depth: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let node_id = nodes.len();
    nodes.push(Node::Leaf { value: mean_of(data, idx) });

    if depth >= params.max_depth || idx.len() < 2 * params.min_leaf {
        return node_id;
    }
    let first = data.targets[idx[0]];
    if idx.iter().all(|i| data.targets[*i] == first) {
        return node_id;
    }

    let k = ((n_features as f64 * params.feature_frac).ceil() as usize).clamp(1, n_features);
    let mut feats: Vec<usize> = (0..n_features).collect();
    feats.shuffle(rng);
    feats.truncate(k);
    feats.sort_unstable();

    let mut best: Option<(f64, usize, f64)> = None; // (sse, feature, threshold)
    let mut order: Vec<usize> = idx.to_vec();
    for &f in &feats {
        order.sort_by(|a, b| data.features[*a][f].partial_cmp(&data.features[*b][f]).unwrap());
        // Prefix sums let each threshold's two-sided SSE come out in O(1).
        let total: f64 = order.iter().map(|i| data.targets[*i]).sum();
        let total_sq: f64 = order.iter().map(|i| data.targets[*i] * data.targets[*i]).sum();
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for split in 1..order.len() {
            let i = order[split - 1];
            left_sum += data.targets[i];
            left_sq += data.targets[i] * data.targets[i];
            let a = data.features[order[split - 1]][f];
            let b = data.features[order[split]][f];
            if a == b || split < params.min_leaf || order.len() - split < params.min_leaf {
                continue;
            }
            let nl = split as f64;
            let nr = (order.len() - split) as f64;
            let right_sum = total - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
            // The midpoint of two adjacent floats can round up to b, which
            // would leave the right side empty; a realizes the same split.
            let mid = 0.5 * (a + b);
            let threshold = if mid < b { mid } else { a };
            if best.map_or(true, |(s, _, _)| sse < s) {
                best = Some((sse, f, threshold));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return node_id;
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|i| data.features[**i][feature] <= threshold);
    let left = build_node(data, params, n_features, &left_idx, depth + 1, rng, nodes);
    let right = build_node(data, params, n_features, &right_idx, depth + 1, rng, nodes);
    nodes[node_id] = Node::Split { feature, threshold, left, right };
    node_id
}

impl EvalModel {
    /// Mean prediction over the trees.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.n_features {
            return Err(Error::Domain(format!(
                "model expects {} features, got {}",
                self.n_features,
                features.len()
            )));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(features)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<EvalModel> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}
