//! Exact piecewise affine realizations of laminates.
//!
//! Fields are hierarchical: a patch holds cells and families of translated,
//! scaled copies of shared child patches, so a construction with billions of
//! teeth per level stays small. All areas, budgets and bounds are computed
//! exactly from the hierarchy.

mod build;
pub mod field;
pub mod io;
pub mod plan;
pub mod restart;
pub mod staircase;
pub mod svg;
pub mod wiggle;

pub use field::{
    Cell, CensusEntry, Family, Field, FieldStats, FlatCell, Patch, Piece, RoundRecord, Tag,
};
pub use plan::{Plan, PlanNode, PlanSplit};
pub use restart::restart_iteration;
pub use staircase::{realize_staircase, RealizeConfig};
pub use wiggle::{realize_finite_laminate, wiggle, WiggleSpec};

use laminate_core::{AfsError, Mat2, MeasureError, StaircaseError};
use laminate_geometry::GeometryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RealizeError {
    #[error("dust radius {dust:e} does not fit inside U at {matrix:?} (margin {margin:e})")]
    EpsilonTooLargeForU {
        matrix: Mat2,
        dust: f64,
        margin: f64,
    },
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("budget exceeded at stage {stage}: {detail}")]
    BudgetExceeded { stage: usize, detail: String },
    #[error("error cell gradient {0:?} is outside U")]
    RestartOutsideU(Mat2),
    #[error("scale underflow: {0}")]
    ScaleUnderflow(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid field document: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Afs(#[from] AfsError),
    #[error(transparent)]
    Staircase(#[from] StaircaseError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
