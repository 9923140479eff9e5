use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::sq_dist;
use super::MetricError;

/// Default chi-square denominator stabilizer.
pub const DEFAULT_TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-chi2(x, y) / sigma2)`, for histogram features.
    Chi2Rbf,
    /// `exp(-|x - y|^2 / sigma2)`.
    GaussRbf,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Chi2Rbf => "chi2_rbf",
            KernelKind::GaussRbf => "gauss_rbf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub kind: KernelKind,
    pub sigma2: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl KernelParams {
    pub fn new(kind: KernelKind, sigma2: f64) -> Result<Self, MetricError> {
        let p = Self {
            kind,
            sigma2,
            tau: DEFAULT_TAU,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(MetricError::InvalidInput(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(MetricError::InvalidInput(format!("tau must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// `sum_i (x_i - y_i)^2 / (x_i + y_i + tau)`; terms with equal entries
/// contribute 0 even when the denominator vanishes.
pub fn chi2_distance(x: &[f64], y: &[f64], tau: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let num = (a - b) * (a - b);
            if num == 0.0 {
                0.0
            } else {
                num / (a + b + tau)
            }
        })
        .sum()
}

/// The distance inside the kernel's exponent.
pub fn kernel_base_distance(kind: KernelKind, x: &[f64], y: &[f64], tau: f64) -> f64 {
    match kind {
        KernelKind::GaussRbf => sq_dist(x, y),
        KernelKind::Chi2Rbf => chi2_distance(x, y, tau),
    }
}

pub(crate) fn check_inputs(kind: KernelKind, x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    if kind == KernelKind::Chi2Rbf && x.iter().chain(y).any(|v| *v < 0.0) {
        return Err(MetricError::InvalidInput(
            "chi2_rbf kernel requires nonnegative (histogram) entries".into(),
        ));
    }
    Ok(())
}

pub fn kernel_eval(params: &KernelParams, x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    params.validate()?;
    check_inputs(params.kind, x, y)?;
    Ok((-kernel_base_distance(params.kind, x, y, params.tau) / params.sigma2).exp())
}

/// `q`-quantile of `distances` by linear interpolation between order
/// statistics. A zero quantile falls back to the smallest positive value.
pub fn sigma_from_quantile(distances: &[f64], q: f64) -> Result<f64, MetricError> {
    if distances.is_empty() {
        return Err(MetricError::InvalidInput("no distances for quantile".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(MetricError::InvalidInput(format!("quantile {q} not in (0, 1)")));
    }
    if distances.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(MetricError::InvalidInput("distances must be finite and >= 0".into()));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    let value = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    if value > 0.0 {
        return Ok(value);
    }
    sorted
        .into_iter()
        .find(|&d| d > 0.0)
        .ok_or_else(|| MetricError::InvalidInput("all distances are zero; cannot set sigma2".into()))
}

/// Kernel-exponent distances over pairs of `vectors`: every unordered pair
/// when there are at most `max_pairs`, otherwise `max_pairs` pairs drawn with
/// a seeded generator.
pub fn pair_distances<V: AsRef<[f64]>>(
    vectors: &[V],
    kind: KernelKind,
    tau: f64,
    max_pairs: usize,
    seed: u64,
) -> Vec<f64> {
    let n = vectors.len();
    let total = n * n.saturating_sub(1) / 2;
    let d = |i: usize, j: usize| kernel_base_distance(kind, vectors[i].as_ref(), vectors[j].as_ref(), tau);
    if total <= max_pairs {
        let mut out = Vec::with_capacity(total);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(d(i, j));
            }
        }
        out
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..max_pairs)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                d(i, j)
            })
            .collect()
    }
}
