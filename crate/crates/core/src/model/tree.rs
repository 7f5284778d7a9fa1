use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Split test of an internal node. Inputs with `value < threshold` go left,
/// everything else (including `value == threshold`) goes right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Split<T> {
    pub feature: usize,
    pub threshold: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound = "T: Real")]
pub enum TreeNode<T> {
    Internal {
        split: Split<T>,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
    Leaf {
        leaf: T,
    },
}

/// Outcome of routing a point through a tree when exact threshold hits
/// must be reported instead of silently routed.
pub(crate) enum Routed<T> {
    Leaf(T),
    OnThreshold { feature: usize, threshold: T },
}

impl<T: Real> TreeNode<T> {
    pub fn leaf(value: T) -> Self {
        TreeNode::Leaf { leaf: value }
    }

    pub fn split(feature: usize, threshold: T, left: TreeNode<T>, right: TreeNode<T>) -> Self {
        TreeNode::Internal {
            split: Split { feature, threshold },
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Leaf value reached by `x`, where `x` is indexed by the tree's local
    /// feature ids.
    pub fn eval(&self, x: impl Fn(usize) -> T) -> T {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf } => return *leaf,
                TreeNode::Internal { split, left, right } => {
                    node = if x(split.feature) < split.threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub(crate) fn route_strict(&self, x: impl Fn(usize) -> T) -> Routed<T> {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf } => return Routed::Leaf(*leaf),
                TreeNode::Internal { split, left, right } => {
                    let v = x(split.feature);
                    if v == split.threshold {
                        return Routed::OnThreshold {
                            feature: split.feature,
                            threshold: split.threshold,
                        };
                    }
                    node = if v < split.threshold { left } else { right };
                }
            }
        }
    }

    /// Depth-first visit of every split.
    pub fn for_each_split(&self, f: &mut impl FnMut(&Split<T>)) {
        if let TreeNode::Internal { split, left, right } = self {
            f(split);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }

    pub fn for_each_leaf(&self, f: &mut impl FnMut(T)) {
        match self {
            TreeNode::Leaf { leaf } => f(*leaf),
            TreeNode::Internal { left, right, .. } => {
                left.for_each_leaf(f);
                right.for_each_leaf(f);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        let mut max = None;
        self.for_each_split(&mut |s| max = Some(max.map_or(s.feature, |m: usize| m.max(s.feature))));
        max
    }
}

/// Additive ensemble: `base_score + sum of leaf values`, summed in tree order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TreeEnsemble<T> {
    pub base_score: T,
    pub trees: Vec<TreeNode<T>>,
}

impl<T: Real> TreeEnsemble<T> {
    pub fn new(base_score: T, trees: Vec<TreeNode<T>>) -> Self {
        Self { base_score, trees }
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + t.eval(|i| x[i]))
    }

    pub(crate) fn eval_strict(&self, x: impl Fn(usize) -> T + Copy) -> Routed<T> {
        let mut acc = self.base_score;
        for t in &self.trees {
            match t.route_strict(x) {
                Routed::Leaf(v) => acc = acc + v,
                hit => return hit,
            }
        }
        Routed::Leaf(acc)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.trees.iter().filter_map(|t| t.max_feature()).max()
    }
}
