//! Learning nonnegative ensembles of base distance metrics that directly
//! optimize CMC ranking quality for person re-identification.
//!
//! The crate is organized bottom-up:
//!
//! * [`data`]: datasets of per-channel feature vectors, train/test splits,
//!   synthetic generators and the per-metric [`data::DistanceTensor`].
//! * [`metrics`]: base metrics (PCA + KISSME, kernel LFDA, Euclidean) and
//!   the bank that fits them per channel.
//! * [`ensemble`]: the two cutting-plane learners (CMC-top and
//!   CMC-triplet) over a nonnegative working-set QP.
//! * [`evaluation`]: CMC curves, the normalized uniform baseline and
//!   multi-split aggregation.
//! * [`experiment`]: config-driven, reproducible end-to-end runs.
//!
//! Data-parallel loops run on rayon with the default `parallel` feature and
//! sequentially without it; results are bit-identical either way.

pub mod data;
pub mod ensemble;
pub mod evaluation;
pub mod experiment;
pub mod fsutil;
pub mod metrics;
pub mod par;

/// Formats `x` with 17 significant digits, enough to round-trip any f64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
