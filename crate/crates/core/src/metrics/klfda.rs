//! Kernel local Fisher discriminant analysis.
//!
//! With Gram matrix `K` and local-scaling affinities `A`, the within- and
//! between-class weights are
//!
//! ```text
//! Ww_ij = A_ij / n_c                 (same class c), 0 otherwise
//! Wb_ij = A_ij (1/n - 1/n_c)         (same class c), 1/n otherwise
//! ```
//!
//! and the kernelized scatters are `S = K (diag(W 1) - W) K`. Directions
//! solve `S_b a = lambda (S_w + beta I) a`; the embedding of `x` is
//! `A^T k(x)` with `k(x)_i = kappa(x_i, x)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kernel::{check_inputs, kernel_base_distance, KernelParams};
use super::linalg::{sq_dist, sym_eigen_desc, symmetrize};
use super::pca::PcaModel;
use super::{BaseMetric, MetricError};

/// Bound on `|S_b a - lambda (S_w + beta I) a| / |a|` for every kept pair.
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlfdaOptions {
    /// Ridge on the within-class scatter.
    pub beta: f64,
    /// Embedding dimension; `None` keeps `min(classes - 1, 64)`.
    pub dim: Option<usize>,
    /// Neighbour rank used for local scaling.
    pub knn: usize,
}

impl Default for KlfdaOptions {
    fn default() -> Self {
        Self {
            beta: 0.01,
            dim: None,
            knn: 7,
        }
    }
}

/// Kernelized scatter matrices of a labelled training set.
#[derive(Debug, Clone)]
pub struct KernelScatter {
    pub gram: DMatrix<f64>,
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlfdaModel {
    pub(crate) label: String,
    pub(crate) channel: String,
    pub(crate) pca: Option<PcaModel>,
    pub(crate) train: Vec<Vec<f64>>,
    pub(crate) params: KernelParams,
    /// `n_train x r`.
    pub(crate) coef: DMatrix<f64>,
    pub(crate) eigenvalues: Vec<f64>,
    pub(crate) beta: f64,
}

impl KlfdaModel {
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coef
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.coef.ncols()
    }

    pub fn training_vectors(&self) -> &[Vec<f64>] {
        &self.train
    }

    pub fn with_names(mut self, label: impl Into<String>, channel: impl Into<String>) -> Self {
        self.label = label.into();
        self.channel = channel.into();
        self
    }

    pub fn with_pca(mut self, pca: PcaModel) -> Self {
        self.pca = Some(pca);
        self
    }

    /// Kernel column of `x` against the training vectors (after the optional
    /// PCA step).
    pub fn kernel_column(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        let x = match &self.pca {
            Some(p) => p.apply(x)?,
            None => x.to_vec(),
        };
        let first = &self.train[0];
        check_inputs(self.params.kind, first, &x)?;
        Ok(self
            .train
            .iter()
            .map(|t| (-kernel_base_distance(self.params.kind, t, &x, self.params.tau) / self.params.sigma2).exp())
            .collect())
    }
}

impl BaseMetric for KlfdaModel {
    fn label(&self) -> &str {
        &self.label
    }

    fn channel(&self) -> &str {
        &self.channel
    }

    fn embed(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        let k = self.kernel_column(x)?;
        Ok((0..self.dim())
            .map(|c| self.coef.column(c).iter().zip(&k).map(|(a, kv)| a * kv).sum())
            .collect())
    }

    fn embedded_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        sq_dist(a, b)
    }
}

/// Squared distance between the embeddings of `x` and `y`.
pub fn klfda_distance(model: &KlfdaModel, x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    model.distance(x, y)
}

fn gram_matrix<V: AsRef<[f64]>>(vectors: &[V], params: &KernelParams) -> DMatrix<f64> {
    let n = vectors.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let d = kernel_base_distance(params.kind, vectors[i].as_ref(), vectors[j].as_ref(), params.tau);
            let v = (-d / params.sigma2).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn laplacian(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut l = -w.clone();
    for i in 0..n {
        l[(i, i)] += w.row(i).sum();
    }
    l
}

/// Builds the Gram matrix and both kernelized local scatters.
pub fn klfda_scatter<V: AsRef<[f64]>>(
    vectors: &[V],
    labels: &[usize],
    params: &KernelParams,
    knn: usize,
) -> Result<KernelScatter, MetricError> {
    params.validate()?;
    let n = vectors.len();
    if labels.len() != n {
        return Err(MetricError::InvalidInput("one label per vector required".into()));
    }
    if n < 2 {
        return Err(MetricError::InvalidInput("kLFDA needs at least 2 vectors".into()));
    }
    for v in vectors {
        check_inputs(params.kind, vectors[0].as_ref(), v.as_ref())?;
    }
    let mut class_size = std::collections::HashMap::new();
    for &l in labels {
        *class_size.entry(l).or_insert(0usize) += 1;
    }
    if class_size.len() < 2 {
        return Err(MetricError::InvalidInput("kLFDA needs at least 2 classes".into()));
    }
    if let Some((c, _)) = class_size.iter().find(|(_, &s)| s < 2) {
        return Err(MetricError::InvalidInput(format!("class {c} has fewer than 2 members")));
    }

    let gram = gram_matrix(vectors, params);
    // Feature-space squared distances.
    let fd = DMatrix::from_fn(n, n, |i, j| (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0));
    let k = knn.clamp(1, n - 1);
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| fd[(i, j)]).collect();
            row.sort_by(f64::total_cmp);
            row[k - 1].sqrt()
        })
        .collect();
    let nf = n as f64;
    let mut ww = DMatrix::zeros(n, n);
    let mut wb = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                let denom = scale[i] * scale[j];
                let a = if denom > 0.0 {
                    (-fd[(i, j)] / denom).exp()
                } else if fd[(i, j)] == 0.0 {
                    1.0
                } else {
                    0.0
                };
                let nc = class_size[&labels[i]] as f64;
                ww[(i, j)] = a / nc;
                wb[(i, j)] = a * (1.0 / nf - 1.0 / nc);
            } else {
                wb[(i, j)] = 1.0 / nf;
            }
        }
    }
    let mut between = &gram * laplacian(&wb) * &gram;
    let mut within = &gram * laplacian(&ww) * &gram;
    symmetrize(&mut between);
    symmetrize(&mut within);
    Ok(KernelScatter {
        gram,
        between,
        within,
    })
}

/// `|S_b a - lambda (S_w + beta I) a|` for one eigenpair.
pub fn eigen_residual(scatter: &KernelScatter, beta: f64, lambda: f64, a: &[f64]) -> f64 {
    let n = a.len();
    let av = nalgebra::DVector::from_column_slice(a);
    let lhs = &scatter.between * &av;
    let mut rhs = &scatter.within * &av;
    for i in 0..n {
        rhs[i] += beta * a[i];
    }
    (lhs - rhs * lambda).norm()
}

/// Fits kLFDA on `(vector, class)` pairs.
pub fn klfda_fit(
    train: &[(Vec<f64>, usize)],
    params: KernelParams,
    options: KlfdaOptions,
) -> Result<KlfdaModel, MetricError> {
    if !(options.beta.is_finite() && options.beta > 0.0) {
        return Err(MetricError::InvalidInput(format!("beta must be > 0, got {}", options.beta)));
    }
    let vectors: Vec<Vec<f64>> = train.iter().map(|(v, _)| v.clone()).collect();
    let labels: Vec<usize> = train.iter().map(|(_, l)| *l).collect();
    let scatter = klfda_scatter(&vectors, &labels, &params, options.knn)?;
    let n = vectors.len();
    let classes = {
        let mut l = labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    };
    let r = options.dim.unwrap_or_else(|| (classes - 1).clamp(1, 64));
    if r == 0 || r > n {
        return Err(MetricError::InvalidInput(format!("embedding dimension {r} not in 1..={n}")));
    }

    let mut b = scatter.within.clone();
    for i in 0..n {
        b[(i, i)] += options.beta;
    }
    let chol = b
        .cholesky()
        .ok_or_else(|| MetricError::Eigen("regularized within-class scatter is not positive definite".into()))?;
    let l = chol.l();
    // C = L^-1 S_b L^-T
    let linv_sb = l
        .solve_lower_triangular(&scatter.between)
        .ok_or_else(|| MetricError::Eigen("triangular solve failed".into()))?;
    let mut c = l
        .solve_lower_triangular(&linv_sb.transpose())
        .ok_or_else(|| MetricError::Eigen("triangular solve failed".into()))?;
    symmetrize(&mut c);
    let (values, vectors_c) = sym_eigen_desc(&c);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::Eigen("non-finite eigenvalue".into()));
    }
    let v = vectors_c.columns(0, r).into_owned();
    let coef = l
        .transpose()
        .solve_upper_triangular(&v)
        .ok_or_else(|| MetricError::Eigen("triangular solve failed".into()))?;
    let eigenvalues = values[..r].to_vec();
    for (kpos, &lambda) in eigenvalues.iter().enumerate() {
        let a: Vec<f64> = coef.column(kpos).iter().copied().collect();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let res = eigen_residual(&scatter, options.beta, lambda, &a);
        if !(res <= RESIDUAL_TOL * norm) || a.iter().any(|x| !x.is_finite()) {
            return Err(MetricError::Eigen(format!(
                "eigenpair {kpos}: residual {res:.3e} exceeds {RESIDUAL_TOL:e} * |a| = {:.3e}",
                RESIDUAL_TOL * norm
            )));
        }
    }
    Ok(KlfdaModel {
        label: "klfda".into(),
        channel: String::new(),
        pca: None,
        train: vectors,
        params,
        coef,
        eigenvalues,
        beta: options.beta,
    })
}
