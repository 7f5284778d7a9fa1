//! Model representation: tree ensembles, dense networks and monotone curves
//! wired into a DAG with a single scalar output.

mod curve;
mod dense;
mod format;
mod graph;
mod tree;

pub use curve::PiecewiseLinearCurve;
pub use dense::{sigmoid, Activation, DenseLayer, DenseNetwork};
pub use format::{ModelDoc, NodeDoc, NodeKind, FORMAT_VERSION};
pub use graph::{validate, CellAssignment, CompositionGraph, Diagnostic, GraphBuilder, Workspace};
pub use tree::{Split, TreeEnsemble, TreeNode};
