//! Gradient boosting on logistic loss with exact greedy splits.

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{GigError, Result};
use crate::model::{CompositionGraph, TreeEnsemble, TreeNode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// L2 damping added to the hessian sum in every leaf.
    pub lambda: f64,
    /// Recorded with the model; training itself has no random steps.
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            n_trees: 25,
            max_depth: 6,
            learning_rate: 0.1,
            min_leaf: 2,
            lambda: 1.0,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 || self.max_depth < 1 || self.min_leaf < 1 {
            return Err(GigError::InvalidArgument(
                "n_trees, max_depth and min_leaf must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(GigError::InvalidArgument("learning_rate must lie in (0, 1]".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(GigError::InvalidArgument("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Training loss and accuracy before boosting (round 0) and after each tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub params: TrainParams,
    pub base_score: f64,
    pub rounds: Vec<RoundStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub feature_names: Vec<String>,
    pub ensemble: TreeEnsemble<f64>,
}

pub fn sigmoid(m: f64) -> f64 {
    crate::model::sigmoid(m)
}

impl GbmModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(GigError::Arity {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.ensemble.eval(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.predict_margin(x).map(sigmoid)
    }

    /// The margin as a model graph.
    pub fn to_graph(&self) -> Result<CompositionGraph<f64>> {
        CompositionGraph::from_ensemble(self.n_features(), self.ensemble.clone())
    }
}

fn logistic_loss(margins: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| {
            // log(1 + exp(-m)) for y = 1, log(1 + exp(m)) for y = 0, stably
            let z = if y == 1 { -m } else { m };
            z.max(0.0) + (-z.abs()).exp().ln_1p()
        })
        .sum();
    total / margins.len() as f64
}

fn accuracy(margins: &[f64], labels: &[u8]) -> f64 {
    let hits = margins
        .iter()
        .zip(labels)
        .filter(|(&m, &y)| (m >= 0.0) == (y == 1))
        .count();
    hits as f64 / margins.len() as f64
}

/// Area under the ROC curve, ties counted half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

enum Slot {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Copy, Default)]
struct Stats {
    count: usize,
    sum: f64,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Regression tree on `target` by variance reduction; leaf values come
/// from `leaf_value` over the rows in each leaf.
struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    sorted: &'a [Vec<usize>],
    target: &'a [f64],
    params: &'a TrainParams,
}

impl TreeBuilder<'_> {
    fn build(&self, leaf_value: impl Fn(&[usize]) -> f64) -> TreeNode<f64> {
        let n = self.rows.len();
        let mut slots: Vec<Slot> = vec![Slot::Leaf(0.0)];
        // node_of[i]: index into `open` of the node row i belongs to
        let mut node_of: Vec<Option<usize>> = vec![Some(0); n];
        let mut open: Vec<usize> = vec![0];
        for depth in 0..=self.params.max_depth {
            let k = open.len();
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
            for i in 0..n {
                if let Some(j) = node_of[i] {
                    members[j].push(i);
                }
            }
            let best = if depth < self.params.max_depth {
                self.best_splits(&node_of, &members)
            } else {
                (0..k).map(|_| None).collect()
            };
            let mut next_open = Vec::new();
            let mut remap: Vec<Option<(usize, usize, f64)>> = vec![None; k];
            for j in 0..k {
                match &best[j] {
                    Some(b) => {
                        let (l, r) = (slots.len(), slots.len() + 1);
                        slots.push(Slot::Leaf(0.0));
                        slots.push(Slot::Leaf(0.0));
                        slots[open[j]] = Slot::Split {
                            feature: b.feature,
                            threshold: b.threshold,
                            left: l,
                            right: r,
                        };
                        remap[j] = Some((next_open.len(), b.feature, b.threshold));
                        next_open.push(l);
                        next_open.push(r);
                    }
                    None => slots[open[j]] = Slot::Leaf(leaf_value(&members[j])),
                }
            }
            if next_open.is_empty() {
                break;
            }
            for i in 0..n {
                node_of[i] = node_of[i].and_then(|j| {
                    remap[j].map(|(base, f, t)| if self.rows[i][f] < t { base } else { base + 1 })
                });
            }
            open = next_open;
        }
        fn assemble(slots: &[Slot], at: usize) -> TreeNode<f64> {
            match slots[at] {
                Slot::Leaf(v) => TreeNode::leaf(v),
                Slot::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => TreeNode::split(feature, threshold, assemble(slots, left), assemble(slots, right)),
            }
        }
        assemble(&slots, 0)
    }

    fn best_splits(&self, node_of: &[Option<usize>], members: &[Vec<usize>]) -> Vec<Option<Best>> {
        let k = members.len();
        let min_leaf = self.params.min_leaf;
        let totals: Vec<Stats> = members
            .iter()
            .map(|m| Stats {
                count: m.len(),
                sum: m.iter().map(|&i| self.target[i]).sum(),
            })
            .collect();
        // splits must beat round-off in the node's sum of squares
        let floor: Vec<f64> = members
            .iter()
            .map(|m| 1e-9 * m.iter().map(|&i| self.target[i] * self.target[i]).sum::<f64>())
            .collect();
        let mut best: Vec<Option<Best>> = (0..k).map(|_| None).collect();
        let d = self.rows.first().map_or(0, Vec::len);
        for f in 0..d {
            let mut left = vec![Stats::default(); k];
            let mut prev: Vec<Option<f64>> = vec![None; k];
            for &i in &self.sorted[f] {
                let Some(j) = node_of[i] else { continue };
                let v = self.rows[i][f];
                if let Some(p) = prev[j] {
                    if v > p && left[j].count >= min_leaf && totals[j].count - left[j].count >= min_leaf {
                        let l = left[j];
                        let r = Stats {
                            count: totals[j].count - l.count,
                            sum: totals[j].sum - l.sum,
                        };
                        let t = totals[j];
                        let gain = l.sum * l.sum / l.count as f64 + r.sum * r.sum / r.count as f64
                            - t.sum * t.sum / t.count as f64;
                        if gain > floor[j] && best[j].as_ref().is_none_or(|b| gain > b.gain) {
                            let mid = 0.5 * (p + v);
                            best[j] = Some(Best {
                                gain,
                                feature: f,
                                threshold: if p < mid { mid } else { v },
                            });
                        }
                    }
                }
                left[j].count += 1;
                left[j].sum += self.target[i];
                prev[j] = Some(v);
            }
        }
        best
    }
}

fn check_data(data: &Dataset, params: &TrainParams) -> Result<()> {
    params.validate()?;
    if data.n_rows() == 0 || data.n_features() == 0 {
        return Err(GigError::Degenerate("empty training data".into()));
    }
    if data.n_rows() < 2 * params.min_leaf {
        return Err(GigError::Degenerate(format!(
            "need at least {} rows for min_leaf = {}",
            2 * params.min_leaf,
            params.min_leaf
        )));
    }
    let mean = data.label_mean();
    if mean == 0.0 || mean == 1.0 {
        return Err(GigError::Degenerate("training data has a single class".into()));
    }
    if data.rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GigError::NonFinite("training feature".into()));
    }
    Ok(())
}

/// Trains an ensemble whose margin is `base_score + sum of trees`.
pub fn train_gbm(data: &Dataset, params: &TrainParams) -> Result<(GbmModel, TrainReport)> {
    check_data(data, params)?;
    let n = data.n_rows();
    let mean = data.label_mean();
    let base_score = (mean / (1.0 - mean)).ln();
    let y: Vec<f64> = data.labels.iter().map(|&l| f64::from(l)).collect();
    let sorted: Vec<Vec<usize>> = (0..data.n_features())
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| data.rows[a][f].total_cmp(&data.rows[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut margins = vec![base_score; n];
    let mut rounds = vec![RoundStats {
        round: 0,
        loss: logistic_loss(&margins, &data.labels),
        accuracy: accuracy(&margins, &data.labels),
    }];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut residual = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for round in 1..=params.n_trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            residual[i] = y[i] - p;
            hess[i] = p * (1.0 - p);
        }
        let builder = TreeBuilder {
            rows: &data.rows,
            sorted: &sorted,
            target: &residual,
            params,
        };
        let tree = builder.build(|rows| {
            let g: f64 = rows.iter().map(|&i| residual[i]).sum();
            let h: f64 = rows.iter().map(|&i| hess[i]).sum();
            params.learning_rate * g / (h + params.lambda)
        });
        for (m, row) in margins.iter_mut().zip(&data.rows) {
            *m += tree.eval(|f| row[f]);
        }
        trees.push(tree);
        rounds.push(RoundStats {
            round,
            loss: logistic_loss(&margins, &data.labels),
            accuracy: accuracy(&margins, &data.labels),
        });
    }
    let model = GbmModel {
        feature_names: data.names.clone(),
        ensemble: TreeEnsemble::new(base_score, trees),
    };
    Ok((
        model,
        TrainReport {
            params: params.clone(),
            base_score,
            rounds,
        },
    ))
}
