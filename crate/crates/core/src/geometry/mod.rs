//! Exact convex-polygon primitives: half-plane clipping, Voronoi and power cells,
//! areas and centroids.

mod cells;
mod point;
mod polygon;

pub use cells::{nearest_site, power_cells, shared_boundary_length, voronoi_cells};
pub use point::{Aabb, Vec2};
pub use polygon::{clip, polygon_moments, ConvexPolygon, HalfPlane};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("sites {first} and {second} coincide")]
    DuplicateSites { first: usize, second: usize },
    #[error("site {index} at ({x}, {y}) lies outside the workspace")]
    SiteOutsideWorkspace { index: usize, x: f64, y: f64 },
    #[error("no generator sites given")]
    NoSites,
    #[error("{radii} power radii given for {sites} sites")]
    RadiiLength { sites: usize, radii: usize },
    #[error("power radius {index} is negative or not finite")]
    NegativeRadius { index: usize },
    #[error("cell {index} degenerated to zero area")]
    DegenerateCell { index: usize },
}
