//! Laminates of finite order on 2×2 matrices, staircase laminates, and the
//! explicit elliptic staircase built from the sets `K_Λ` and `U`.

pub mod afs;
pub mod error;
pub mod mat;
pub mod measure;
pub mod staircase;

pub use afs::{AfsParams, AfsStaircase, EllipticCoefficient, OpenSet, StageSplit};
pub use error::{AfsError, MatError, MeasureError, StaircaseError};
pub use mat::{Mat2, RankOneFactorization, Vec2};
pub use measure::{DiscreteMeasure, SplitStep, SplitTree, WeightedAtom};
pub use staircase::{StaircaseTruncation, TailReport};
