//! On-disk model document. See `docs/model-format.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DenseNetwork, PiecewiseLinearCurve, TreeEnsemble};
use crate::error::Result;
use crate::scalar::Real;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModelDoc<T> {
    pub version: u32,
    pub n_features: usize,
    pub nodes: Vec<NodeDoc<T>>,
    pub output_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NodeDoc<T> {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(flatten)]
    pub kind: NodeKind<T>,
}

/// Node payloads. Every node's input vector is the concatenation of its
/// input nodes' outputs, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum NodeKind<T> {
    /// Slice of the raw feature vector.
    Input { features: Vec<usize> },
    /// Piecewise-constant part; must read only `input` nodes.
    TreeEnsemble(TreeEnsemble<T>),
    Dense(DenseNetwork<T>),
    /// Applied elementwise.
    PwlCurve(PiecewiseLinearCurve<T>),
    /// `weights . input + bias`.
    Linear { weights: Vec<T>, bias: T },
    /// Product of all input entries.
    Product,
}

impl<T: Real> NodeKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Input { .. } => "input",
            NodeKind::TreeEnsemble(_) => "tree_ensemble",
            NodeKind::Dense(_) => "dense",
            NodeKind::PwlCurve(_) => "pwl_curve",
            NodeKind::Linear { .. } => "linear",
            NodeKind::Product => "product",
        }
    }
}

impl<T: Real> ModelDoc<T> {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}
