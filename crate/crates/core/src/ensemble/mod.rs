//! Nonnegative metric-ensemble learning with cutting planes.

mod cv;
mod manifest;
mod ordering;
mod qp;
mod separation;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TensorError;

pub use cv::{cross_validate_nu, cross_validate_nu_on, default_nu_grid, CvResult, CvRow};
pub use manifest::{parse_manifest, Manifest};
pub use ordering::{column_gallery, column_of, delta_loss, feature_map_psi, rank_candidates, OrderingMatrix};
pub use qp::{kkt_residuals, qp_objective, solve_working_set_qp, KktResiduals, QpError, QpSolution, KKT_TOL};
pub use separation::{most_violated_top, most_violated_triplet, Separation};
pub use train::{train, EnsembleModel, TrainingConfig, TrainingDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    CmcTop,
    CmcTriplet,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::CmcTop => "cmc_top",
            Objective::CmcTriplet => "cmc_triplet",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = EnsembleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cmc_top" => Ok(Objective::CmcTop),
            "cmc_triplet" => Ok(Objective::CmcTriplet),
            _ => Err(EnsembleError::InvalidConfig(format!("unknown objective {s:?}"))),
        }
    }
}

/// A linear cut `w . g >= b - xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingConstraint {
    pub g: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("recall parameter k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("learned ensemble has all weights zero (nu too small for this data?)")]
    ZeroWeights,
    #[error("cross-validation fold {fold} too small: {detail}")]
    FoldTooSmall { fold: usize, detail: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
