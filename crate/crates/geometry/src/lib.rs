//! Planar geometry for piecewise affine fields: convex polygons, clipping,
//! covers of a target by scaled copies of a template, and exact polynomial
//! moments over polygons.

pub mod cover;
pub mod moments;
pub mod polygon;

pub use cover::{
    cover, quadtree_cover, strip_cover, Cover, Placement, QuadCover, Rect, StripCover,
};
pub use laminate_core::{Mat2, Vec2};
pub use moments::{MomentTable, Transfer, MAX_DEGREE};
pub use polygon::{ConvexPolygon, HalfPlane};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("fill {0} outside (0, 1)")]
    InvalidFill(f64),
    #[error("cover stalled at fill {achieved} below the requested {fill}")]
    FillUnreachable { achieved: f64, fill: f64 },
}
