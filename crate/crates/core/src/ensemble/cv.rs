//! Choosing the regularizer by k-fold cross-validation on training data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::DistanceTensor;
use crate::evaluation::rank1_rate;
use crate::par;

use super::train::train_unchecked;
use super::{EnsembleError, Objective, TrainingConfig};

/// Eleven log-spaced points: `10^2 .. 10^3` for CMC-top and
/// `10^3 .. 10^4` for CMC-triplet.
pub fn default_nu_grid(objective: Objective) -> Vec<f64> {
    let base = match objective {
        Objective::CmcTop => 20,
        Objective::CmcTriplet => 30,
    };
    (0..=10).map(|i| 10f64.powf((base + i) as f64 / 10.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub nu: f64,
    pub fold_rank1: Vec<f64>,
    pub mean_rank1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub nu: f64,
    pub rows: Vec<CvRow>,
}

fn folds_for(m: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (p, &i) in order.iter().enumerate() {
        out[p % folds].push(i);
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    out
}

/// Picks the grid value with the best mean validation rank-1 rate, ties
/// going to the smaller value. `build` returns the distance tensor over a
/// subset of the `m` training positions.
pub fn cross_validate_nu<F>(
    m: usize,
    grid: &[f64],
    folds: usize,
    seed: u64,
    config: &TrainingConfig,
    build: F,
) -> Result<CvResult, EnsembleError>
where
    F: Fn(&[usize]) -> Result<DistanceTensor, EnsembleError>,
{
    if grid.is_empty() {
        return Err(EnsembleError::InvalidConfig("empty nu grid".into()));
    }
    if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(EnsembleError::InvalidConfig(format!("grid value {v} is not positive")));
    }
    if folds < 2 || folds > m {
        return Err(EnsembleError::InvalidConfig(format!("need 2 <= folds <= {m}, got {folds}")));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let parts = folds_for(m, folds, seed);
    let mut data = Vec::with_capacity(folds);
    for (f, val) in parts.iter().enumerate() {
        let fit: Vec<usize> = (0..m).filter(|i| val.binary_search(i).is_err()).collect();
        if val.len() < 2 {
            return Err(EnsembleError::FoldTooSmall { fold: f, detail: format!("{} validation individuals", val.len()) });
        }
        if config.objective == Objective::CmcTop && fit.len() <= config.k {
            return Err(EnsembleError::FoldTooSmall {
                fold: f,
                detail: format!("{} fitting individuals for k = {}", fit.len(), config.k),
            });
        }
        data.push((build(&fit)?, build(val)?));
    }

    let rows = par::try_map_slice(&grid, |&nu| {
        let cfg = TrainingConfig { nu, ..*config };
        let mut fold_rank1 = Vec::with_capacity(folds);
        for (fit, val) in &data {
            let model = train_unchecked(fit, &cfg)?;
            if !model.converged() {
                log::warn!("cross-validation run at nu = {nu} did not converge");
            }
            fold_rank1.push(rank1_rate(&model.weights, val).map_err(|e| EnsembleError::InvalidConfig(e.to_string()))?);
        }
        let mean_rank1 = fold_rank1.iter().sum::<f64>() / folds as f64;
        Ok::<_, EnsembleError>(CvRow { nu, fold_rank1, mean_rank1 })
    })?;

    let mut best = &rows[0];
    for row in &rows[1..] {
        if row.mean_rank1 > best.mean_rank1 {
            best = row;
        }
    }
    Ok(CvResult { nu: best.nu, rows })
}

/// Cross-validation over subsets of an existing training tensor.
pub fn cross_validate_nu_on(
    tensor: &DistanceTensor,
    grid: &[f64],
    folds: usize,
    seed: u64,
    config: &TrainingConfig,
) -> Result<CvResult, EnsembleError> {
    cross_validate_nu(tensor.m(), grid, folds, seed, config, |idx| Ok(tensor.subset(idx)?))
}
