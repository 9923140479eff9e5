use nalgebra::DMatrix;

use super::linalg::sym_eigen_desc;
use super::MetricError;

/// Principal-component projection: `x -> basis^T (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub(crate) mean: Vec<f64>,
    /// `D x d`, orthonormal columns, leading directions first.
    pub(crate) basis: DMatrix<f64>,
    /// Sample variance along each kept direction.
    pub(crate) variances: Vec<f64>,
    pub(crate) total_variance: f64,
}

/// Relative eigenvalue floor below which a kept direction counts as
/// carrying no variance.
const DEGENERATE_RTOL: f64 = 1e-12;

impl PcaModel {
    /// Pass-through model: zero mean, identity basis.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            basis: DMatrix::identity(dim, dim),
            variances: vec![1.0; dim],
            total_variance: dim as f64,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Total sample variance of the fitted data (trace of its covariance).
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Number of kept directions with (numerically) zero variance.
    pub fn degenerate_directions(&self) -> usize {
        let top = self.variances.first().copied().unwrap_or(0.0).max(0.0);
        self.variances
            .iter()
            .filter(|&&v| v <= DEGENERATE_RTOL * top || v <= 0.0)
            .count()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        if x.len() != self.input_dim() {
            return Err(MetricError::Dimension {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let d = self.output_dim();
        let mut out = vec![0.0; d];
        for (k, o) in out.iter_mut().enumerate() {
            let col = self.basis.column(k);
            *o = x
                .iter()
                .zip(&self.mean)
                .zip(col.iter())
                .map(|((xi, mi), bi)| (xi - mi) * bi)
                .sum();
        }
        Ok(out)
    }

    /// Maps a projected vector back to input space.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        (0..self.input_dim())
            .map(|i| self.mean[i] + (0..self.output_dim()).map(|k| self.basis[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }
}

/// Fits a `d`-dimensional PCA on `vectors` (sample covariance, `n - 1`
/// normalization). Requires `n >= 2` and `d <= min(D, n - 1)`.
pub fn pca_fit<V: AsRef<[f64]>>(vectors: &[V], d: usize) -> Result<PcaModel, MetricError> {
    let n = vectors.len();
    if n < 2 {
        return Err(MetricError::InvalidInput(format!("PCA needs at least 2 vectors, got {n}")));
    }
    let dim = vectors[0].as_ref().len();
    if let Some(bad) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return Err(MetricError::Dimension {
            expected: dim,
            found: bad.as_ref().len(),
        });
    }
    if d == 0 || d > dim.min(n - 1) {
        return Err(MetricError::InvalidInput(format!(
            "PCA dimension {d} must be in 1..={} (D = {dim}, n = {n})",
            dim.min(n - 1)
        )));
    }
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = DMatrix::zeros(n, dim);
    for (r, v) in vectors.iter().enumerate() {
        for (c, (x, m)) in v.as_ref().iter().zip(&mean).enumerate() {
            centered[(r, c)] = x - m;
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let total_variance = cov.trace();
    let (values, vectors) = sym_eigen_desc(&cov);
    let basis = vectors.columns(0, d).into_owned();
    let variances: Vec<f64> = values[..d].iter().map(|v| v.max(0.0)).collect();
    let model = PcaModel {
        mean,
        basis,
        variances,
        total_variance,
    };
    let degenerate = model.degenerate_directions();
    if degenerate > 0 {
        log::warn!("PCA: {degenerate} of {d} kept directions carry no variance");
    }
    Ok(model)
}
