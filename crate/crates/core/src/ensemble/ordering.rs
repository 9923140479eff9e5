//! Ordering matrices, the top-k loss and the joint feature map.
//!
//! Row `i` of an [`OrderingMatrix`] covers the `m - 1` gallery candidates
//! other than probe `i`'s true match. Column `c` refers to gallery index
//! `c` when `c < i` and `c + 1` otherwise. An entry of 1 means the
//! candidate is ranked ahead of the true match.

use crate::data::DistanceTensor;

use super::EnsembleError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderingMatrix {
    m: usize,
    bits: Vec<bool>,
}

impl OrderingMatrix {
    /// The all-zero matrix: every true match ahead of every candidate.
    pub fn correct(m: usize) -> Self {
        Self { m, bits: vec![false; m * m.saturating_sub(1)] }
    }

    pub fn ones(m: usize) -> Self {
        Self { m, bits: vec![true; m * m.saturating_sub(1)] }
    }

    /// Builds a matrix from a predicate over `(probe, gallery)` with
    /// `gallery != probe`.
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut p = Self::correct(m);
        for i in 0..m {
            for c in 0..m - 1 {
                p.bits[i * (m - 1) + c] = f(i, column_gallery(i, c));
            }
        }
        p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.m.saturating_sub(1)
    }

    pub fn get(&self, probe: usize, col: usize) -> bool {
        self.bits[probe * self.cols() + col]
    }

    pub fn set(&mut self, probe: usize, col: usize, value: bool) {
        let cols = self.cols();
        self.bits[probe * cols + col] = value;
    }

    /// Entry for gallery index `gallery` in row `probe`.
    pub fn get_pair(&self, probe: usize, gallery: usize) -> bool {
        self.get(probe, column_of(probe, gallery))
    }

    pub fn set_pair(&mut self, probe: usize, gallery: usize, value: bool) {
        self.set(probe, column_of(probe, gallery), value)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn row(&self, probe: usize) -> &[bool] {
        let cols = self.cols();
        &self.bits[probe * cols..(probe + 1) * cols]
    }

    pub(crate) fn row_mut(&mut self, probe: usize) -> &mut [bool] {
        let cols = self.cols();
        &mut self.bits[probe * cols..(probe + 1) * cols]
    }
}

/// Gallery index of column `col` in row `probe`.
pub fn column_gallery(probe: usize, col: usize) -> usize {
    if col < probe {
        col
    } else {
        col + 1
    }
}

/// Column of gallery index `gallery` in row `probe`; `gallery != probe`.
pub fn column_of(probe: usize, gallery: usize) -> usize {
    debug_assert_ne!(probe, gallery);
    if gallery < probe {
        gallery
    } else {
        gallery - 1
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_weights(w: &[f64], tensor: &DistanceTensor) -> Result<(), EnsembleError> {
    if w.len() != tensor.n_metrics() {
        return Err(EnsembleError::Dimension { expected: tensor.n_metrics(), found: w.len() });
    }
    if let Some(v) = w.iter().find(|v| !v.is_finite()) {
        return Err(EnsembleError::InvalidConfig(format!("non-finite weight {v}")));
    }
    Ok(())
}

pub(crate) fn check_k(k: usize, m: usize) -> Result<(), EnsembleError> {
    if m < 2 || k == 0 || k > m - 1 {
        return Err(EnsembleError::KOutOfRange { k, max: m.saturating_sub(1) });
    }
    Ok(())
}

fn check_ordering(p: &OrderingMatrix, tensor: &DistanceTensor) -> Result<(), EnsembleError> {
    if p.m() != tensor.m() {
        return Err(EnsembleError::Dimension { expected: tensor.m(), found: p.m() });
    }
    Ok(())
}

/// Gallery candidates of `probe` (its true match excluded), nearest first
/// under `w`, ties by ascending gallery index. Also returns each
/// candidate's ensemble distance, indexed by column.
pub fn rank_candidates(w: &[f64], tensor: &DistanceTensor, probe: usize) -> (Vec<usize>, Vec<f64>) {
    let m = tensor.m();
    let dist: Vec<f64> = (0..m - 1).map(|c| dot(w, tensor.pair(probe, column_gallery(probe, c)))).collect();
    let mut order: Vec<usize> = (0..m - 1).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    (order, dist)
}

/// Top-k loss: the fraction of the `m * k` leading rank positions held by
/// candidates that `p` marks as outranking the true match.
pub fn delta_loss(
    p: &OrderingMatrix,
    w: &[f64],
    tensor: &DistanceTensor,
    k: usize,
) -> Result<f64, EnsembleError> {
    check_ordering(p, tensor)?;
    check_weights(w, tensor)?;
    let m = tensor.m();
    check_k(k, m)?;
    let mut count = 0usize;
    for i in 0..m {
        let (order, _) = rank_candidates(w, tensor, i);
        count += order[..k].iter().filter(|&&c| p.get(i, c)).count();
    }
    Ok(count as f64 / (m * k) as f64)
}

/// Joint feature map: `(1/(m k)) sum_i sum_j (1 - p_ij) (d_ij - d_ii)`.
pub fn feature_map_psi(p: &OrderingMatrix, tensor: &DistanceTensor, k: usize) -> Result<Vec<f64>, EnsembleError> {
    check_ordering(p, tensor)?;
    let m = tensor.m();
    check_k(k, m)?;
    let t = tensor.n_metrics();
    let mut psi = vec![0.0; t];
    for i in 0..m {
        let plus = tensor.matched(i);
        for c in 0..m - 1 {
            if !p.get(i, c) {
                let minus = tensor.pair(i, column_gallery(i, c));
                for (s, (a, b)) in psi.iter_mut().zip(minus.iter().zip(plus)) {
                    *s += a - b;
                }
            }
        }
    }
    let scale = 1.0 / (m * k) as f64;
    psi.iter_mut().for_each(|v| *v *= scale);
    Ok(psi)
}
