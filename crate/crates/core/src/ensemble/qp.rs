//! Working-set quadratic program
//!
//! ```text
//! min 1/2 |w|^2 + nu xi   s.t.  g_r . w >= b_r - xi,  w >= 0,  xi >= 0
//! ```
//!
//! solved exactly as a linear complementarity problem with Lemke's method
//! (lexicographic ratio test, so degenerate pivots cannot cycle). The
//! final complementary basis is re-solved with an LU factorization to
//! remove accumulated tableau round-off before the KKT residuals are
//! checked.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::WorkingConstraint;

pub const KKT_TOL: f64 = 1e-8;

/// Scaled KKT residuals. All are zero at an exact optimum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `w = max(0, G^T alpha)` and `sum(alpha) <= nu`, with equality when
    /// `xi > 0`.
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("constraint {index} has {found} coefficients, expected {expected}")]
    Dimension { index: usize, expected: usize, found: usize },
    #[error("invalid QP input: {0}")]
    Invalid(String),
    #[error("QP solver stopped after {pivots} pivots without converging (residuals {residuals:?})")]
    NoConvergence { pivots: usize, residuals: Option<KktResiduals> },
    #[error("QP solution fails KKT tolerance: {residuals:?}")]
    Residual { residuals: KktResiduals },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub w: Vec<f64>,
    pub xi: f64,
    /// Multipliers, one per input constraint.
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub pivots: usize,
}

pub fn qp_objective(w: &[f64], xi: f64, nu: f64) -> f64 {
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + nu * xi
}

/// Solves the working-set QP over `t` weights.
pub fn solve_working_set_qp(constraints: &[WorkingConstraint], t: usize, nu: f64) -> Result<QpSolution, QpError> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(QpError::Invalid(format!("nu must be positive, got {nu}")));
    }
    for (index, c) in constraints.iter().enumerate() {
        if c.g.len() != t {
            return Err(QpError::Dimension { index, expected: t, found: c.g.len() });
        }
        if !c.b.is_finite() || c.g.iter().any(|v| !v.is_finite()) {
            return Err(QpError::Invalid(format!("constraint {index} has non-finite entries")));
        }
    }

    // Identical rows share one multiplier.
    let mut unique: Vec<usize> = Vec::new();
    let mut owner = Vec::with_capacity(constraints.len());
    for (r, c) in constraints.iter().enumerate() {
        match unique.iter().position(|&u| constraints[u] == *c) {
            Some(pos) => owner.push(pos),
            None => {
                owner.push(unique.len());
                unique.push(r);
            }
        }
    }
    let rows: Vec<&WorkingConstraint> = unique.iter().map(|&r| &constraints[r]).collect();

    let (m, q) = lcp_system(&rows, t, nu);
    let n = q.len();
    let max_pivots = 50 * n + 1000;
    let (mut z, pivots) = lemke(&m, &q, max_pivots).map_err(|pivots| QpError::NoConvergence { pivots, residuals: None })?;
    polish(&m, &q, &mut z);

    let mut w: Vec<f64> = z[..t].to_vec();
    let mut xi = z[t];
    let unique_alpha = &z[t + 1..];
    for v in w.iter_mut() {
        if *v < 0.0 && *v >= -1e-12 {
            *v = 0.0;
        }
    }
    if xi < 0.0 && xi >= -1e-12 {
        xi = 0.0;
    }
    let mut alpha = vec![0.0; constraints.len()];
    let mut seen = vec![false; rows.len()];
    for (r, &o) in owner.iter().enumerate() {
        if !seen[o] {
            alpha[r] = unique_alpha[o].max(0.0);
            seen[o] = true;
        }
    }
    let residuals = kkt_residuals(constraints, &w, xi, &alpha, nu);
    if residuals.max() > KKT_TOL {
        return Err(QpError::Residual { residuals });
    }
    w.iter_mut().for_each(|v| *v = v.max(0.0));
    let xi = xi.max(0.0);
    Ok(QpSolution { objective: qp_objective(&w, xi, nu), w, xi, alpha, residuals, pivots })
}

/// LCP data for `z = (w, xi, alpha)`: find `z >= 0` with
/// `s = M z + q >= 0` and `z . s = 0`.
fn lcp_system(rows: &[&WorkingConstraint], t: usize, nu: f64) -> (DMatrix<f64>, Vec<f64>) {
    let nx = t + 1;
    let n = nx + rows.len();
    let mut m = DMatrix::zeros(n, n);
    let mut q = vec![0.0; n];
    for i in 0..t {
        m[(i, i)] = 1.0;
    }
    q[t] = nu;
    for (r, c) in rows.iter().enumerate() {
        for j in 0..t {
            m[(j, nx + r)] = -c.g[j];
            m[(nx + r, j)] = c.g[j];
        }
        m[(t, nx + r)] = -1.0;
        m[(nx + r, t)] = 1.0;
        q[nx + r] = -c.b;
    }
    (m, q)
}

/// Lemke's method with covering vector of ones. Returns `z` or the pivot
/// count on failure.
fn lemke(m: &DMatrix<f64>, q: &[f64], max_pivots: usize) -> Result<(Vec<f64>, usize), usize> {
    let n = q.len();
    if q.iter().all(|&v| v >= 0.0) {
        return Ok((vec![0.0; n], 0));
    }
    // Columns: slacks 0..n, z n..2n, artificial 2n.
    let width = 2 * n + 1;
    let art = 2 * n;
    let mut tab = vec![0.0; n * width];
    let mut rhs = q.to_vec();
    for i in 0..n {
        tab[i * width + i] = 1.0;
        for j in 0..n {
            tab[i * width + n + j] = -m[(i, j)];
        }
        tab[i * width + art] = -1.0;
    }
    let mut basis: Vec<usize> = (0..n).collect();

    let mut r = 0;
    for i in 1..n {
        if rhs[i] < rhs[r] {
            r = i;
        }
    }
    pivot(&mut tab, &mut rhs, width, r, art);
    let mut leaving = basis[r];
    basis[r] = art;
    let mut pivots = 1;

    loop {
        let entering = if leaving < n { leaving + n } else { leaving - n };
        let Some(r) = ratio_test(&tab, &rhs, &basis, width, n, entering, art) else {
            return Err(pivots);
        };
        pivot(&mut tab, &mut rhs, width, r, entering);
        leaving = basis[r];
        basis[r] = entering;
        pivots += 1;
        if leaving == art {
            break;
        }
        if pivots >= max_pivots {
            return Err(pivots);
        }
    }
    let mut z = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if (n..2 * n).contains(&b) {
            z[b - n] = rhs[i];
        }
    }
    Ok((z, pivots))
}

fn ratio_test(tab: &[f64], rhs: &[f64], basis: &[usize], width: usize, n: usize, col: usize, art: usize) -> Option<usize> {
    let col_max = (0..n).map(|i| tab[i * width + col].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * col_max.max(1.0);
    let candidates: Vec<usize> = (0..n).filter(|&i| tab[i * width + col] > tol).collect();
    if candidates.is_empty() {
        return None;
    }
    let ratio = |i: usize| rhs[i].max(0.0) / tab[i * width + col];
    let best = candidates.iter().map(|&i| ratio(i)).fold(f64::INFINITY, f64::min);
    let tie_tol = 1e-12 * best.abs().max(1.0);
    let mut ties: Vec<usize> = candidates.into_iter().filter(|&i| ratio(i) <= best + tie_tol).collect();
    if ties.len() == 1 {
        return Some(ties[0]);
    }
    if let Some(&i) = ties.iter().find(|&&i| basis[i] == art) {
        return Some(i);
    }
    // Lexicographic rule on the rows of the basis inverse, which sit in
    // the slack columns of the tableau.
    for k in 0..n {
        let scaled = |i: usize| tab[i * width + k] / tab[i * width + col];
        let min = ties.iter().map(|&i| scaled(i)).fold(f64::INFINITY, f64::min);
        ties.retain(|&i| scaled(i) <= min + 1e-12 * min.abs().max(1.0));
        if ties.len() == 1 {
            break;
        }
    }
    Some(ties[0])
}

fn pivot(tab: &mut [f64], rhs: &mut [f64], width: usize, r: usize, c: usize) {
    let n = rhs.len();
    let p = tab[r * width + c];
    for v in &mut tab[r * width..(r + 1) * width] {
        *v /= p;
    }
    rhs[r] /= p;
    tab[r * width + c] = 1.0;
    let pivot_row: Vec<f64> = tab[r * width..(r + 1) * width].to_vec();
    for i in (0..n).filter(|&i| i != r) {
        let f = tab[i * width + c];
        if f != 0.0 {
            for (v, pr) in tab[i * width..(i + 1) * width].iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            rhs[i] -= f * rhs[r];
            tab[i * width + c] = 0.0;
        }
    }
}

fn natural_residual(m: &DMatrix<f64>, q: &[f64], z: &[f64]) -> f64 {
    let s = m * DVector::from_column_slice(z);
    z.iter().zip(q).enumerate().map(|(i, (&zi, &qi))| zi.min(s[i] + qi).abs()).fold(0.0, f64::max)
}

/// Re-solves `M_BB z_B = -q_B` on the support of `z` and keeps the result
/// when it is at least as accurate.
fn polish(m: &DMatrix<f64>, q: &[f64], z: &mut [f64]) {
    let support: Vec<usize> = (0..z.len()).filter(|&i| z[i] > 0.0).collect();
    if support.is_empty() {
        return;
    }
    let k = support.len();
    let sub = DMatrix::from_fn(k, k, |a, b| m[(support[a], support[b])]);
    let rhs = DVector::from_iterator(k, support.iter().map(|&i| -q[i]));
    let Some(sol) = sub.lu().solve(&rhs) else {
        return;
    };
    let mut candidate = vec![0.0; z.len()];
    for (a, &i) in support.iter().enumerate() {
        candidate[i] = sol[a];
    }
    if candidate.iter().all(|v| v.is_finite()) && natural_residual(m, q, &candidate) <= natural_residual(m, q, z) {
        z.copy_from_slice(&candidate);
    }
}

/// KKT residuals of `(w, xi, alpha)`, each scaled by the magnitude of the
/// quantities it compares.
pub fn kkt_residuals(constraints: &[WorkingConstraint], w: &[f64], xi: f64, alpha: &[f64], nu: f64) -> KktResiduals {
    let t = w.len();
    let mut combo = vec![0.0; t];
    for (c, &a) in constraints.iter().zip(alpha) {
        for (acc, g) in combo.iter_mut().zip(&c.g) {
            *acc += a * g;
        }
    }
    let combo_scale = combo.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let nu_scale = nu.max(1.0);
    let alpha_sum: f64 = alpha.iter().sum();

    let mut stationarity = w.iter().zip(&combo).map(|(wi, ci)| (wi - ci.max(0.0)).abs()).fold(0.0, f64::max) / combo_scale;
    stationarity = stationarity.max((alpha_sum - nu).max(0.0) / nu_scale);

    let w_abs = w.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut primal = (-xi).max(0.0) + w.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let mut complementarity = xi.max(0.0).min((nu - alpha_sum).abs()) / nu_scale;
    for (c, &a) in constraints.iter().zip(alpha) {
        let lhs: f64 = c.g.iter().zip(w).map(|(g, v)| g * v).sum();
        let scale = 1.0f64.max(c.b.abs()).max(c.g.iter().fold(0.0f64, |acc, g| acc.max(g.abs())) * w_abs).max(xi);
        let slack = (lhs + xi - c.b) / scale;
        primal = primal.max((-slack).max(0.0));
        complementarity = complementarity.max((a / nu_scale).min(slack.abs()));
    }
    let dual = alpha.iter().map(|a| (-a).max(0.0)).fold(0.0, f64::max) / nu_scale;
    KktResiduals { stationarity, primal, dual, complementarity }
}
