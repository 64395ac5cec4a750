//! Multi-agent spatial coverage toolkit.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64` for everyday use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assign;
pub mod coverage;
pub mod density;
pub mod geometry;
pub mod linalg;
pub mod poi;
pub mod submod;
pub mod swarm;
pub mod transport;
mod scalar;

pub use scalar::Scalar;

pub type Point = geometry::Vec2<f64>;
pub type Polygon = geometry::ConvexPolygon<f64>;
pub type Density = density::DensityField<f64>;
pub type Agent = coverage::AgentState<f64>;
pub type Measure = density::DiscreteMeasure<f64>;

pub type Point32 = geometry::Vec2<f32>;
pub type Polygon32 = geometry::ConvexPolygon<f32>;
pub type Density32 = density::DensityField<f32>;
