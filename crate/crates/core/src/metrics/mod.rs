//! Trainable base distances `d_t(x, y)`: PCA, KISSME, kernel LFDA, plain
//! squared Euclidean, and the bank that fits them per feature channel.

mod bank;
mod container;
mod kernel;
mod kissme;
mod klfda;
pub(crate) mod linalg;
mod pca;

use thiserror::Error;

pub use bank::{build_metric_bank, BankConfig, BankEntry, LearnerSpec};
pub use container::{load_bank, read_metric, save_bank, write_metric, BANK_MANIFEST, METRIC_MAGIC};
pub use kernel::{
    chi2_distance, kernel_base_distance, kernel_eval, pair_distances, sigma_from_quantile, KernelKind,
    KernelParams, DEFAULT_TAU,
};
pub use kissme::{
    clip_spectrum, kissme_fit, kissme_from_covariances, mahalanobis_distance, MahalanobisMetric, PairScatter,
};
pub use klfda::{eigen_residual, klfda_distance, klfda_fit, klfda_scatter, KernelScatter, KlfdaModel, KlfdaOptions};
pub use pca::{pca_fit, PcaModel};

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("{0}")]
    InvalidInput(String),
    #[error("{0}")]
    Singular(String),
    #[error("eigen-solver failure: {0}")]
    Eigen(String),
    #[error("metric {label}: {source}")]
    Bank {
        label: String,
        #[source]
        source: Box<MetricError>,
    },
    #[error("duplicate metric label {0:?} in bank config")]
    DuplicateLabel(String),
    #[error("metric {label}: channel {channel:?} not in dataset schema")]
    UnknownChannel { label: String, channel: String },
    #[error("metric file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A trained distance over one feature channel.
///
/// Distances are evaluated in two steps so that bulk evaluation can embed
/// each sample once: `distance(x, y) = embedded_distance(embed(x), embed(y))`.
pub trait BaseMetric: Send + Sync {
    /// Stable identifier, `channel/learner/params`.
    fn label(&self) -> &str;
    /// Name of the feature channel the metric reads.
    fn channel(&self) -> &str;
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>, MetricError>;
    fn embedded_distance(&self, a: &[f64], b: &[f64]) -> f64;

    fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
        Ok(self.embedded_distance(&self.embed(x)?, &self.embed(y)?))
    }
}

impl<M: BaseMetric + ?Sized> BaseMetric for Box<M> {
    fn label(&self) -> &str {
        (**self).label()
    }
    fn channel(&self) -> &str {
        (**self).channel()
    }
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        (**self).embed(x)
    }
    fn embedded_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (**self).embedded_distance(a, b)
    }
}

impl<M: BaseMetric + ?Sized> BaseMetric for &M {
    fn label(&self) -> &str {
        (**self).label()
    }
    fn channel(&self) -> &str {
        (**self).channel()
    }
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        (**self).embed(x)
    }
    fn embedded_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (**self).embedded_distance(a, b)
    }
}

/// Untrained squared Euclidean distance on a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredEuclidean {
    label: String,
    channel: String,
    dim: Option<usize>,
}

impl SquaredEuclidean {
    pub fn new(channel: impl Into<String>) -> Self {
        let channel = channel.into();
        Self {
            label: format!("{channel}/euclidean"),
            channel,
            dim: None,
        }
    }

    /// Rejects inputs whose length differs from `dim`.
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }
}

impl BaseMetric for SquaredEuclidean {
    fn label(&self) -> &str {
        &self.label
    }
    fn channel(&self) -> &str {
        &self.channel
    }
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        match self.dim {
            Some(d) if d != x.len() => Err(MetricError::Dimension {
                expected: d,
                found: x.len(),
            }),
            _ => Ok(x.to_vec()),
        }
    }
    fn embedded_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        linalg::sq_dist(a, b)
    }
}

/// Any metric the bank can produce.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedMetric {
    Euclidean(SquaredEuclidean),
    Kissme(MahalanobisMetric),
    Klfda(KlfdaModel),
}

impl TrainedMetric {
    pub fn learner(&self) -> &'static str {
        match self {
            TrainedMetric::Euclidean(_) => "euclidean",
            TrainedMetric::Kissme(_) => "kissme",
            TrainedMetric::Klfda(_) => "klfda",
        }
    }

    fn inner(&self) -> &dyn BaseMetric {
        match self {
            TrainedMetric::Euclidean(m) => m,
            TrainedMetric::Kissme(m) => m,
            TrainedMetric::Klfda(m) => m,
        }
    }
}

impl BaseMetric for TrainedMetric {
    fn label(&self) -> &str {
        self.inner().label()
    }
    fn channel(&self) -> &str {
        self.inner().channel()
    }
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        self.inner().embed(x)
    }
    fn embedded_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.inner().embedded_distance(a, b)
    }
}
