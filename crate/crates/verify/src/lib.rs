//! Quantitative checks for laminates and realized fields.
//!
//! Everything is computed from the patch hierarchy without expanding it:
//! areas from the census, superlevel sets from gradient classes, weak
//! residuals from polynomial moments transported through the families.

pub mod closeness;
pub mod distribution;
pub mod laminate;
pub mod poly;
pub mod residual;
pub mod structure;
pub mod tail;

pub use closeness::{holder_estimate, sup_distance, SupReport};
pub use distribution::{
    compare_distribution, gradient_distribution, AtomComparison, DistributionComparison,
    EmpiricalAtom, GradientDistribution,
};
pub use laminate::{verify_staircase, LaminateReport};
pub use residual::{weak_residual, ResidualReport, ResidualRow, TestFunction};
pub use structure::{
    check_membership, check_preserved, check_structure, MembershipReport, StructureReport,
};
pub use tail::{achieved_range, field_tail, tail_grid, FieldTailReport};

use laminate_core::{Mat2, MeasureError, StaircaseError};
use laminate_geometry::GeometryError;
use laminate_realize::RealizeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("empirical K atom {0:?} has no counterpart in the reference measure")]
    UnmatchedAtom(Mat2),
    #[error("{tag} cell with gradient {matrix:?} admits no elliptic coefficient")]
    ExtractionFailed { matrix: Mat2, tag: &'static str },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Realize(#[from] RealizeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Staircase(#[from] StaircaseError),
}
