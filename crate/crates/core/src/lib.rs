//! Generalized integrated gradients (GIG): exact, axiomatic credit
//! assignment for models built from tree ensembles and continuous functions.
//!
//! A model `f(x) = g(x, D(x))` is explained along the straight path from a
//! baseline `s` to a point `e`. The attribution is the sum of
//!
//! * integrated gradients of `g` over every open path segment on which the
//!   tree outputs `D` are constant,
//! * a corner credit `zeta` at every interior point where the path crosses
//!   one or more split hyperplanes, and
//! * endpoint credits `iota` when `s` or `e` sits on a split hyperplane.
//!
//! The numeric modules are generic over [`Real`] (`f32`/`f64`); corner
//! weights are exact rationals. The aliases below fix the scalar to `f64`.

pub mod boundary;
pub mod calibration;
pub mod continuous;
pub mod corner;
pub mod datasets;
pub mod engine;
pub mod error;
pub mod gbm;
pub mod model;
pub mod quadrature;
pub mod scalar;

pub use error::{GigError, Result};
pub use scalar::{Exact, Real};

pub type Graph = model::CompositionGraph<f64>;
pub type Graph32 = model::CompositionGraph<f32>;
pub type Ensemble = model::TreeEnsemble<f64>;
pub type Curve = model::PiecewiseLinearCurve<f64>;
pub type Cells = model::CellAssignment<f64>;
pub type Table = boundary::BoundaryTable<f64>;
pub type Attribution = engine::Attribution<f64>;
pub type Attribution32 = engine::Attribution<f32>;
pub type Query = boundary::PathQuery<f64>;
