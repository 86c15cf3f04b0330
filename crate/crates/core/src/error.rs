use thiserror::Error;

use crate::mat::Mat2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("matrix {0:?} is not rank one")]
    NotRankOne(Mat2),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("atom {index} is {found:?}, split expects parent {expected:?}")]
    AtomMismatch {
        index: usize,
        expected: Mat2,
        found: Mat2,
    },
    #[error("split difference {0:?} is not rank one")]
    NotRankOne(Mat2),
    #[error("split weight {0} outside the open interval (0, 1)")]
    LambdaOutOfRange(f64),
    #[error("split does not reconstruct its parent (error {0:e})")]
    ParentMismatch(f64),
    #[error("weights sum to {0}, expected 1")]
    MassNotOne(f64),
    #[error("invalid atom: weight {weight}, matrix {matrix:?}")]
    InvalidAtom { weight: f64, matrix: Mat2 },
    #[error("empty measure")]
    Empty,
    #[error("invalid split tree at step {step}: {reason}")]
    InvalidTree { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StaircaseError {
    #[error("stage {stage}: barycenter off by {error:e}")]
    BarycenterMismatch { stage: usize, error: f64 },
    #[error("stage {stage}: gamma = {gamma} outside (0, 1)")]
    GammaOutOfRange { stage: usize, gamma: f64 },
    #[error("stage {stage}: soaring norm does not increase")]
    NonIncreasingSoar { stage: usize },
    #[error("stage {stage}: stage measure charges the soaring sequence")]
    SoarInSupport { stage: usize },
    #[error("inconsistent staircase data: {0}")]
    Shape(String),
    #[error("tail is zero at t = {t} inside the fit range")]
    DegenerateRange { t: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AfsError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("matrix {0:?} is not in U")]
    NotInU(Mat2),
    #[error("stage parameters violate the construction: {0}")]
    ParamViolation(String),
    #[error("convex reconstruction failed (error {0:e})")]
    Reconstruction(f64),
    #[error(transparent)]
    Staircase(#[from] StaircaseError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}
