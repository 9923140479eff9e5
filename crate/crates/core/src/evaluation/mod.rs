//! CMC evaluation, the normalized uniform baseline and multi-split
//! aggregation.

mod report;

use thiserror::Error;

use crate::data::DistanceTensor;
use crate::ensemble::column_gallery;

pub use report::{aggregate, parse_curve_table, EvalReport, DEFAULT_RANKS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("distance matrix must be square, got {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("true match column {col} out of range for probe {probe}")]
    BadMatch { probe: usize, col: usize },
    #[error("non-finite distance at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("nothing to aggregate")]
    Empty,
    #[error("curve table: {0}")]
    Format(String),
}

/// Dense probe x gallery distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, EvalError> {
        if values.len() != rows * cols {
            return Err(EvalError::Dimension { expected: rows * cols, found: values.len() });
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite { row: p / cols.max(1), col: p % cols.max(1) });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `sum_t w_t D[i][j][t]` for every probe/gallery pair.
pub fn ensemble_distance_matrix(w: &[f64], tensor: &DistanceTensor) -> Result<DistanceMatrix, EvalError> {
    if w.len() != tensor.n_metrics() {
        return Err(EvalError::Dimension { expected: tensor.n_metrics(), found: w.len() });
    }
    let m = tensor.m();
    let mut values = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            values.push(tensor.pair(i, j).iter().zip(w).map(|(d, w)| d * w).sum());
        }
    }
    DistanceMatrix::new(m, m, values)
}

/// Row-wise min-max scaling to `[0, 1]`. Constant rows become zeros and
/// their indices are returned.
pub fn normalize_per_probe(matrix: &DistanceMatrix) -> (DistanceMatrix, Vec<usize>) {
    let mut values = Vec::with_capacity(matrix.values.len());
    let mut constant = Vec::new();
    for i in 0..matrix.rows {
        let row = matrix.row(i);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        if span > 0.0 {
            values.extend(row.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)));
        } else {
            constant.push(i);
            values.extend(std::iter::repeat_n(0.0, row.len()));
        }
    }
    if !constant.is_empty() {
        log::warn!("{} constant distance rows normalized to zero", constant.len());
    }
    (DistanceMatrix { rows: matrix.rows, cols: matrix.cols, values }, constant)
}

/// Mean over metrics of the per-probe normalized slices. Also returns the
/// number of constant rows met across all slices.
pub fn uniform_baseline_matrix(tensor: &DistanceTensor) -> (DistanceMatrix, usize) {
    let m = tensor.m();
    let t = tensor.n_metrics();
    let mut acc = vec![0.0; m * m];
    let mut flagged = 0;
    for s in 0..t {
        let slice = DistanceMatrix { rows: m, cols: m, values: tensor.slice(s) };
        let (norm, constant) = normalize_per_probe(&slice);
        flagged += constant.len();
        for (a, v) in acc.iter_mut().zip(&norm.values) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|v| *v /= t as f64);
    (DistanceMatrix { rows: m, cols: m, values: acc }, flagged)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve {
    /// `rates[r - 1]`: fraction of probes whose match is within the `r`
    /// nearest gallery entries.
    pub rates: Vec<f64>,
    pub n_probes: usize,
}

impl CmcCurve {
    pub fn gallery_size(&self) -> usize {
        self.rates.len()
    }

    /// Rate at 1-based rank `r`, `None` past the gallery size.
    pub fn rate(&self, r: usize) -> Option<f64> {
        r.checked_sub(1).and_then(|i| self.rates.get(i)).copied()
    }
}

/// 0-based rank of column `truth` in `row`: entries strictly closer, plus
/// ties at lower gallery index.
pub fn match_rank(row: &[f64], truth: usize) -> usize {
    let d = row[truth];
    row.iter().enumerate().filter(|&(j, &v)| v < d || (v == d && j < truth)).count()
}

/// CMC of a square matrix whose true matches lie on the diagonal.
pub fn cmc_curve(matrix: &DistanceMatrix) -> Result<CmcCurve, EvalError> {
    if matrix.rows != matrix.cols {
        return Err(EvalError::NotSquare { rows: matrix.rows, cols: matrix.cols });
    }
    let matches: Vec<usize> = (0..matrix.rows).collect();
    cmc_curve_with_matches(matrix, &matches)
}

/// CMC for a gallery that may be larger than the probe set; `matches[i]`
/// is the column holding probe `i`'s true match.
pub fn cmc_curve_with_matches(matrix: &DistanceMatrix, matches: &[usize]) -> Result<CmcCurve, EvalError> {
    if matches.len() != matrix.rows {
        return Err(EvalError::Dimension { expected: matrix.rows, found: matches.len() });
    }
    let mut hist = vec![0usize; matrix.cols];
    for (i, &col) in matches.iter().enumerate() {
        if col >= matrix.cols {
            return Err(EvalError::BadMatch { probe: i, col });
        }
        hist[match_rank(matrix.row(i), col)] += 1;
    }
    let n = matrix.rows;
    let mut cumulative = 0;
    let rates = hist
        .iter()
        .map(|h| {
            cumulative += h;
            cumulative as f64 / n as f64
        })
        .collect();
    Ok(CmcCurve { rates, n_probes: n })
}

/// Rank-1 rate of the ensemble `w` on `tensor`, the quantity
/// cross-validation maximizes.
pub fn rank1_rate(w: &[f64], tensor: &DistanceTensor) -> Result<f64, EvalError> {
    let matrix = ensemble_distance_matrix(w, tensor)?;
    Ok(cmc_curve(&matrix)?.rates.first().copied().unwrap_or(0.0))
}

/// Training-set CMC@k of an ensemble, counting only impostors (the same
/// candidate set the learners rank).
pub fn training_cmc_at(w: &[f64], tensor: &DistanceTensor, k: usize) -> f64 {
    let m = tensor.m();
    let hits = (0..m)
        .filter(|&i| {
            let dot = |j: usize| tensor.pair(i, j).iter().zip(w).map(|(d, w)| d * w).sum::<f64>();
            let d = dot(i);
            let ahead = (0..m - 1)
                .map(|c| column_gallery(i, c))
                .filter(|&j| {
                    let v = dot(j);
                    v < d || (v == d && j < i)
                })
                .count();
            ahead < k
        })
        .count();
    hits as f64 / m as f64
}
