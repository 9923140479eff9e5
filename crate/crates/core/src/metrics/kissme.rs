//! KISS metric learning: `M = clip(inv(Sigma_S) - inv(Sigma_D))`, where the
//! covariances are taken over pair differences of similar and dissimilar
//! pairs and `clip` zeroes negative eigenvalues.

use nalgebra::DMatrix;

use super::linalg::{sym_eigen_desc, symmetrize};
use super::pca::PcaModel;
use super::{BaseMetric, MetricError};

/// Condition number above which a covariance is ridge-regularized.
pub const MAX_CONDITION: f64 = 1e12;
/// Ridge size relative to `trace / d`.
pub const RIDGE_SCALE: f64 = 1e-6;

/// Running second moment of pair differences, `sum z z^T` over pairs.
#[derive(Debug, Clone)]
pub struct PairScatter {
    sum: DMatrix<f64>,
    count: f64,
}

impl PairScatter {
    pub fn new(dim: usize) -> Self {
        Self {
            sum: DMatrix::zeros(dim, dim),
            count: 0.0,
        }
    }

    pub fn add(&mut self, x: &[f64], y: &[f64]) {
        let d = self.sum.nrows();
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        for i in 0..d {
            for j in 0..d {
                self.sum[(i, j)] += z[i] * z[j];
            }
        }
        self.count += 1.0;
    }

    /// Adds every cross pair `(a[i], b[j])` with `i != j` in closed form.
    pub fn add_cross_pairs(&mut self, a: &[Vec<f64>], b: &[Vec<f64>]) {
        let n = a.len();
        let d = self.sum.nrows();
        if n < 2 {
            return;
        }
        let mat = |rows: &[Vec<f64>]| DMatrix::from_fn(d, rows.len(), |i, k| rows[k][i]);
        let am = mat(a);
        let bm = mat(b);
        let sa = am.column_sum();
        let sb = bm.column_sum();
        let nf = n as f64;
        let mut all = (&am * am.transpose()) * nf + (&bm * bm.transpose()) * nf
            - &sa * sb.transpose()
            - &sb * sa.transpose();
        let diff = &am - &bm;
        all -= &diff * diff.transpose();
        self.sum += all;
        self.count += nf * (nf - 1.0);
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>, MetricError> {
        if self.count == 0.0 {
            return Err(MetricError::InvalidInput("no pairs".into()));
        }
        let mut c = &self.sum / self.count;
        symmetrize(&mut c);
        Ok(c)
    }
}

/// Learned Mahalanobis distance `(P x - P y)^T M (P x - P y)` where `P` is
/// an attached PCA projection.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisMetric {
    pub(crate) label: String,
    pub(crate) channel: String,
    pub(crate) pca: PcaModel,
    pub(crate) m: DMatrix<f64>,
}

impl MahalanobisMetric {
    pub fn new(label: impl Into<String>, channel: impl Into<String>, pca: PcaModel, m: DMatrix<f64>) -> Result<Self, MetricError> {
        if m.nrows() != m.ncols() || m.nrows() != pca.output_dim() {
            return Err(MetricError::Dimension {
                expected: pca.output_dim(),
                found: m.nrows(),
            });
        }
        Ok(Self {
            label: label.into(),
            channel: channel.into(),
            pca,
            m,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn with_names(mut self, label: impl Into<String>, channel: impl Into<String>) -> Self {
        self.label = label.into();
        self.channel = channel.into();
        self
    }

    /// `z^T M z` for a difference already in PCA space.
    fn quadratic(&self, z: &[f64]) -> f64 {
        let d = z.len();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.m[(i, j)] * z[j];
            }
            acc += z[i] * row;
        }
        acc.max(0.0)
    }
}

impl BaseMetric for MahalanobisMetric {
    fn label(&self) -> &str {
        &self.label
    }

    fn channel(&self) -> &str {
        &self.channel
    }

    fn embed(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        self.pca.apply(x)
    }

    fn embedded_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let z: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.quadratic(&z)
    }
}

/// Mahalanobis distance between raw vectors `x` and `y`.
pub fn mahalanobis_distance(metric: &MahalanobisMetric, x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    metric.distance(x, y)
}

/// Inverse of a covariance, ridge-regularized when ill-conditioned.
fn regularized_inverse(cov: &DMatrix<f64>, what: &str, regularize: bool) -> Result<DMatrix<f64>, MetricError> {
    let d = cov.nrows();
    let singular = || {
        MetricError::Singular(format!(
            "{what} covariance is singular; reduce the PCA dimension or enable covariance regularization"
        ))
    };
    let trace = cov.trace();
    if !(trace.is_finite() && trace > 0.0) {
        return Err(singular());
    }
    let (values, _) = sym_eigen_desc(cov);
    let (hi, lo) = (values[0], values[d - 1]);
    let mut c = cov.clone();
    if lo <= 0.0 || hi / lo > MAX_CONDITION {
        if !regularize {
            return Err(singular());
        }
        let gamma = RIDGE_SCALE * trace / d as f64;
        log::debug!("{what} covariance condition {:.3e}: adding {gamma:.3e} I", hi / lo);
        for i in 0..d {
            c[(i, i)] += gamma;
        }
    }
    let chol = c.cholesky().ok_or_else(singular)?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Zeroes the negative part of the spectrum of a symmetric matrix.
pub fn clip_spectrum(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen_desc(a);
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (&v * v.transpose()) * lambda;
    }
    symmetrize(&mut out);
    out
}

/// KISSME from precomputed difference covariances.
pub fn kissme_from_covariances(
    sigma_similar: &DMatrix<f64>,
    sigma_dissimilar: &DMatrix<f64>,
    regularize: bool,
) -> Result<DMatrix<f64>, MetricError> {
    if sigma_similar.shape() != sigma_dissimilar.shape() || !sigma_similar.is_square() {
        return Err(MetricError::InvalidInput("covariance shapes differ".into()));
    }
    let s_inv = regularized_inverse(sigma_similar, "similar-pair", regularize)?;
    let d_inv = regularized_inverse(sigma_dissimilar, "dissimilar-pair", regularize)?;
    let mut raw = s_inv - d_inv;
    symmetrize(&mut raw);
    Ok(clip_spectrum(&raw))
}

/// Fits KISSME on raw vector pairs, projecting both sides through `pca`
/// first. Pass [`PcaModel::identity`] to work in the input space.
pub fn kissme_fit<V: AsRef<[f64]>>(
    similar: &[(V, V)],
    dissimilar: &[(V, V)],
    pca: PcaModel,
    regularize: bool,
) -> Result<MahalanobisMetric, MetricError> {
    if similar.is_empty() || dissimilar.is_empty() {
        return Err(MetricError::InvalidInput("KISSME needs similar and dissimilar pairs".into()));
    }
    let d = pca.output_dim();
    let scatter = |pairs: &[(V, V)]| -> Result<PairScatter, MetricError> {
        let mut s = PairScatter::new(d);
        for (x, y) in pairs {
            s.add(&pca.apply(x.as_ref())?, &pca.apply(y.as_ref())?);
        }
        Ok(s)
    };
    let cs = scatter(similar)?.covariance()?;
    let cd = scatter(dissimilar)?.covariance()?;
    let m = kissme_from_covariances(&cs, &cd, regularize)?;
    MahalanobisMetric::new("kissme", "", pca, m)
}
