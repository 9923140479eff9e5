//! The cutting-plane driver.

use serde::{Deserialize, Serialize};

use crate::data::DistanceTensor;

use super::ordering::check_k;
use super::qp::solve_working_set_qp;
use super::separation::{most_violated_top, most_violated_triplet};
use super::{EnsembleError, Objective, WorkingConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub nu: f64,
    pub k: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub objective: Objective,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { nu: 100.0, k: 10, epsilon: 1e-6, max_iterations: 500, objective: Objective::CmcTop }
    }
}

impl TrainingConfig {
    pub fn validate(&self, m: usize) -> Result<(), EnsembleError> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(EnsembleError::InvalidConfig(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(EnsembleError::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(EnsembleError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if m < 2 {
            return Err(EnsembleError::InvalidConfig(format!("need at least 2 training individuals, got {m}")));
        }
        if self.objective == Objective::CmcTop {
            check_k(self.k, m)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingDiagnostics {
    /// Number of QP solves.
    pub iterations: usize,
    pub xi: f64,
    /// Most-violated value minus `xi` at the final weights.
    pub violation: f64,
    /// `1/2 |w|^2 + nu xi` after each QP solve.
    pub objective_history: Vec<f64>,
    pub converged: bool,
    pub constraints: usize,
    pub max_kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    /// `None` for the uniform baseline.
    pub config: Option<TrainingConfig>,
    pub diagnostics: Option<TrainingDiagnostics>,
}

impl EnsembleModel {
    /// Equal weights `1/T`, used with per-probe normalized distances.
    pub fn uniform(labels: Vec<String>) -> Self {
        let t = labels.len();
        Self { weights: vec![1.0 / t as f64; t], labels, config: None, diagnostics: None }
    }

    pub fn method(&self) -> &'static str {
        self.config.map_or("uniform", |c| c.objective.name())
    }

    pub fn is_uniform(&self) -> bool {
        self.config.is_none()
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.as_ref().is_none_or(|d| d.converged)
    }

    /// Fraction of the weight's l1 mass on metric `t`.
    pub fn mass_fraction(&self, t: usize) -> f64 {
        let total: f64 = self.weights.iter().map(|w| w.abs()).sum();
        if total == 0.0 {
            0.0
        } else {
            self.weights[t].abs() / total
        }
    }
}

/// Learns nonnegative weights for the metrics of `tensor`.
///
/// Reaching `max_iterations` is not an error: the last weights are
/// returned with `converged == false`. All-zero weights are.
pub fn train(tensor: &DistanceTensor, config: &TrainingConfig) -> Result<EnsembleModel, EnsembleError> {
    let model = train_unchecked(tensor, config)?;
    if model.weights.iter().all(|w| *w == 0.0) {
        return Err(EnsembleError::ZeroWeights);
    }
    Ok(model)
}

pub(crate) fn train_unchecked(tensor: &DistanceTensor, config: &TrainingConfig) -> Result<EnsembleModel, EnsembleError> {
    config.validate(tensor.m())?;
    let t = tensor.n_metrics();
    let mut working: Vec<WorkingConstraint> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let sol = solve_working_set_qp(&working, t, config.nu)?;
        iterations += 1;
        history.push(sol.objective);
        let sep = match config.objective {
            Objective::CmcTop => most_violated_top(&sol.w, tensor, config.k)?,
            Objective::CmcTriplet => most_violated_triplet(&sol.w, tensor)?,
        };
        let violation = sep.violation(sol.xi);
        log::debug!(
            "{} iteration {iterations}: objective {:.6e}, xi {:.6e}, violation {:.3e}",
            config.objective.name(),
            sol.objective,
            sol.xi,
            violation
        );
        let converged = violation <= config.epsilon;
        if converged || iterations >= config.max_iterations {
            if !converged {
                log::warn!("{} stopped after {iterations} iterations, violation {violation:.3e}", config.objective.name());
            }
            return Ok(EnsembleModel {
                labels: tensor.labels().to_vec(),
                weights: sol.w,
                config: Some(*config),
                diagnostics: Some(TrainingDiagnostics {
                    iterations,
                    xi: sol.xi,
                    violation,
                    objective_history: history,
                    converged,
                    constraints: working.len(),
                    max_kkt_residual: sol.residuals.max(),
                }),
            });
        }
        working.push(sep.constraint);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{most_violated_top, rank_candidates};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_tensor(seed: u64, m: usize, t: usize) -> DistanceTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vals = Vec::with_capacity(m * m * t);
        for i in 0..m {
            for j in 0..m {
                for s in 0..t {
                    let signal = if i == j { 0.0 } else { 1.0 };
                    vals.push(rng.random_range(0.0..1.5) + signal * (s + 1) as f64 * 0.5);
                }
            }
        }
        DistanceTensor::new((0..m).map(|i| format!("p{i}")).collect(), (0..t).map(|s| format!("d{s}")).collect(), vals)
            .unwrap()
    }

    #[test]
    fn objective_history_is_monotone_and_final_cut_satisfied() {
        for objective in [Objective::CmcTop, Objective::CmcTriplet] {
            for seed in 0..4 {
                let tensor = noisy_tensor(seed, 12, 3);
                let config = TrainingConfig { nu: 50.0, k: 3, objective, ..Default::default() };
                let model = train(&tensor, &config).unwrap();
                let d = model.diagnostics.as_ref().unwrap();
                assert!(d.converged);
                for pair in d.objective_history.windows(2) {
                    assert!(pair[1] >= pair[0] - 1e-12 * pair[0].abs().max(1.0), "{pair:?}");
                }
                assert!(d.violation <= 1e-6);
                assert!(model.weights.iter().all(|w| *w >= 0.0));
            }
        }
    }

    #[test]
    fn single_metric_keeps_its_ranking() {
        let tensor = noisy_tensor(9, 8, 1);
        let model = train(&tensor, &TrainingConfig { nu: 10.0, k: 2, ..Default::default() }).unwrap();
        assert!(model.weights[0] > 0.0);
        for i in 0..8 {
            assert_eq!(rank_candidates(&model.weights, &tensor, i).0, rank_candidates(&[1.0], &tensor, i).0);
        }
    }

    #[test]
    fn deterministic() {
        let tensor = noisy_tensor(4, 15, 4);
        let config = TrainingConfig { nu: 200.0, k: 5, ..Default::default() };
        let a = train(&tensor, &config).unwrap();
        let b = train(&tensor, &config).unwrap();
        assert_eq!(a.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(), b.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let tensor = noisy_tensor(2, 12, 3);
        let config = TrainingConfig { nu: 1e3, k: 3, max_iterations: 2, ..Default::default() };
        let model = train(&tensor, &config).unwrap();
        let d = model.diagnostics.unwrap();
        assert!(!d.converged);
        assert_eq!(d.iterations, 2);
        assert!(d.violation > 1e-6);
    }

    #[test]
    fn final_oracle_value_bounded_by_slack() {
        let tensor = noisy_tensor(6, 10, 2);
        let config = TrainingConfig { nu: 80.0, k: 4, ..Default::default() };
        let model = train(&tensor, &config).unwrap();
        let sep = most_violated_top(&model.weights, &tensor, 4).unwrap();
        assert!(sep.value <= model.diagnostics.unwrap().xi + 1e-6);
    }

    #[test]
    fn inverted_metric_gives_zero_weights_error() {
        // every true match is farther than every impostor
        let m = 5;
        let vals = (0..m * m).map(|x| if x % (m + 1) == 0 { 9.0 } else { 1.0 }).collect();
        let tensor = DistanceTensor::new((0..m).map(|i| i.to_string()).collect(), vec!["t".into()], vals).unwrap();
        let config = TrainingConfig { nu: 100.0, k: 2, ..Default::default() };
        assert!(matches!(train(&tensor, &config), Err(EnsembleError::ZeroWeights)));
    }

    #[test]
    fn config_validation() {
        let bad = TrainingConfig { k: 6, ..Default::default() };
        assert!(matches!(bad.validate(6), Err(EnsembleError::KOutOfRange { .. })));
        assert!(TrainingConfig { objective: Objective::CmcTriplet, ..bad }.validate(6).is_ok());
        assert!(TrainingConfig { nu: -1.0, ..Default::default() }.validate(20).is_err());
        assert!(TrainingConfig { epsilon: 0.0, ..Default::default() }.validate(20).is_err());
    }
}
