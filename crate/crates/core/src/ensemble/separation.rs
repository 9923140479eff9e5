//! Most-violated-constraint oracles for the two objectives.
//!
//! Both oracles decompose over probes: rows are computed independently
//! (in parallel when enabled) and summed in probe order so the result does
//! not depend on the thread count.

use crate::data::DistanceTensor;
use crate::par;

use super::ordering::{check_k, check_weights, column_gallery, dot, rank_candidates, OrderingMatrix};
use super::{EnsembleError, WorkingConstraint};

/// A separation result: the constraint `w . g >= b - xi` and its value
/// `b - w . g` at the weights the oracle was called with.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub selection: OrderingMatrix,
    pub constraint: WorkingConstraint,
    pub value: f64,
}

impl Separation {
    pub fn violation(&self, xi: f64) -> f64 {
        self.value - xi
    }
}

struct Row {
    bits: Vec<bool>,
    offset: f64,
    direction: Vec<f64>,
}

fn assemble(m: usize, t: usize, rows: Vec<Row>, scale: f64, w: &[f64]) -> Separation {
    let mut selection = OrderingMatrix::correct(m);
    let mut g = vec![0.0; t];
    let mut b = 0.0;
    for (i, row) in rows.into_iter().enumerate() {
        selection.row_mut(i).copy_from_slice(&row.bits);
        b += row.offset;
        for (acc, v) in g.iter_mut().zip(&row.direction) {
            *acc += v;
        }
    }
    g.iter_mut().for_each(|v| *v *= scale);
    b *= scale;
    let value = b - dot(w, &g);
    Separation { selection, constraint: WorkingConstraint { g, b }, value }
}

fn margin_row(w: &[f64], tensor: &DistanceTensor, i: usize) -> (f64, Vec<f64>) {
    let plus = dot(w, tensor.matched(i));
    let m = tensor.m();
    let margins = (0..m - 1).map(|c| dot(w, tensor.pair(i, column_gallery(i, c))) - plus).collect();
    (plus, margins)
}

fn add_difference(acc: &mut [f64], tensor: &DistanceTensor, i: usize, c: usize) {
    let plus = tensor.matched(i);
    let minus = tensor.pair(i, column_gallery(i, c));
    for (s, (a, b)) in acc.iter_mut().zip(minus.iter().zip(plus)) {
        *s += a - b;
    }
}

/// Closed-form maximizer of `delta(P) - w . (psi(P*) - psi(P))` over all
/// ordering matrices. Candidates in the top `k` rank positions are marked
/// when their margin is at most 1, the rest when it is at most 0.
///
/// The returned constraint has `g = psi(P*) - psi(P)` and `b = delta(P)`.
pub fn most_violated_top(w: &[f64], tensor: &DistanceTensor, k: usize) -> Result<Separation, EnsembleError> {
    check_weights(w, tensor)?;
    let m = tensor.m();
    check_k(k, m)?;
    let t = tensor.n_metrics();
    let rows = par::map_range(m, |i| {
        let (order, _) = rank_candidates(w, tensor, i);
        let (_, margins) = margin_row(w, tensor, i);
        let mut bits = vec![false; m - 1];
        let mut offset = 0.0;
        let mut direction = vec![0.0; t];
        for (pos, &c) in order.iter().enumerate() {
            let marked = if pos < k { margins[c] <= 1.0 } else { margins[c] <= 0.0 };
            if marked {
                bits[c] = true;
                if pos < k {
                    offset += 1.0;
                }
                add_difference(&mut direction, tensor, i, c);
            }
        }
        Row { bits, offset, direction }
    });
    Ok(assemble(m, t, rows, 1.0 / (m * k) as f64, w))
}

/// One-slack triplet separation: selects every triplet with margin below 1.
///
/// The constraint is `g = (1/(m(m-1))) sum c_ij (d_ij - d_ii)`,
/// `b = (1/(m(m-1))) sum c_ij`.
pub fn most_violated_triplet(w: &[f64], tensor: &DistanceTensor) -> Result<Separation, EnsembleError> {
    check_weights(w, tensor)?;
    let m = tensor.m();
    if m < 2 {
        return Err(EnsembleError::Dimension { expected: 2, found: m });
    }
    let t = tensor.n_metrics();
    let rows = par::map_range(m, |i| {
        let (_, margins) = margin_row(w, tensor, i);
        let mut direction = vec![0.0; t];
        let mut offset = 0.0;
        let bits: Vec<bool> = margins.iter().map(|&v| v < 1.0).collect();
        for (c, &on) in bits.iter().enumerate() {
            if on {
                offset += 1.0;
                add_difference(&mut direction, tensor, i, c);
            }
        }
        Row { bits, offset, direction }
    });
    Ok(assemble(m, t, rows, 1.0 / (m * (m - 1)) as f64, w))
}
