use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{ChannelSchema, SplitSizes, SynthConfig};
use crate::ensemble::{default_nu_grid, Objective, TrainingConfig};
use crate::evaluation::DEFAULT_RANKS;
use crate::metrics::{BankConfig, BankEntry, KernelKind, LearnerSpec};

use super::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CmcTop,
    CmcTriplet,
    Uniform,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::CmcTop => "cmc_top",
            Method::CmcTriplet => "cmc_triplet",
            Method::Uniform => "uniform",
        }
    }

    pub fn objective(&self) -> Option<Objective> {
        match self {
            Method::CmcTop => Some(Objective::CmcTop),
            Method::CmcTriplet => Some(Objective::CmcTriplet),
            Method::Uniform => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cmc_top" => Ok(Method::CmcTop),
            "cmc_triplet" => Ok(Method::CmcTriplet),
            "uniform" => Ok(Method::Uniform),
            _ => Err(ExperimentError::Config(format!(
                "unknown objective {s:?} (expected cmc_top, cmc_triplet or uniform)"
            ))),
        }
    }
}

/// Where the individuals come from: feature files, or a synthetic spec.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankPreset {
    /// One KISSME metric per channel.
    #[default]
    Kissme,
    /// One squared-Euclidean metric per channel.
    Euclidean,
    /// KISSME at several PCA dimensions and kLFDA at several kernel widths
    /// per channel.
    MultiMetric,
}

fn default_pca() -> usize {
    32
}

fn default_max_pca() -> usize {
    64
}

fn default_kernel() -> KernelKind {
    KernelKind::Chi2Rbf
}

/// Bank description: explicit `entries`, or a preset expanded over the
/// dataset's channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSpec {
    #[serde(default)]
    pub preset: BankPreset,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<BankEntry>,
    /// KISSME PCA dimension for the `kissme` preset, capped by each
    /// channel's dimension.
    #[serde(default = "default_pca")]
    pub pca_dim: usize,
    #[serde(default = "default_max_pca")]
    pub max_pca: usize,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
}

impl Default for BankSpec {
    fn default() -> Self {
        Self {
            preset: BankPreset::default(),
            entries: Vec::new(),
            pca_dim: default_pca(),
            max_pca: default_max_pca(),
            kernel: default_kernel(),
        }
    }
}

impl BankSpec {
    pub fn resolve(&self, schema: &[ChannelSchema], seed: u64) -> BankConfig {
        let mut config = if !self.entries.is_empty() {
            BankConfig::new(self.entries.clone())
        } else {
            match self.preset {
                BankPreset::Kissme => BankConfig::new(
                    schema
                        .iter()
                        .map(|c| BankEntry {
                            channel: c.name.clone(),
                            learner: LearnerSpec::Kissme { pca_dim: self.pca_dim.min(c.dim), regularize: true },
                        })
                        .collect(),
                ),
                BankPreset::Euclidean => BankConfig::new(
                    schema
                        .iter()
                        .map(|c| BankEntry { channel: c.name.clone(), learner: LearnerSpec::Euclidean })
                        .collect(),
                ),
                BankPreset::MultiMetric => BankConfig::multi_metric(schema, self.kernel, self.max_pca),
            }
        };
        config.seed = seed;
        config
    }
}

fn default_nu() -> f64 {
    100.0
}

fn default_folds() -> usize {
    3
}

fn default_k() -> usize {
    10
}

fn default_epsilon() -> f64 {
    1e-6
}

fn default_max_iterations() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    /// Used when no grid is given.
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_grid: Option<Vec<f64>>,
    /// Cross-validate over the objective's built-in grid.
    #[serde(default)]
    pub default_grid: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            nu: default_nu(),
            nu_grid: None,
            default_grid: false,
            folds: default_folds(),
            k: default_k(),
            epsilon: default_epsilon(),
            max_iterations: default_max_iterations(),
        }
    }
}

impl TrainingSpec {
    pub fn config(&self, objective: Objective) -> TrainingConfig {
        TrainingConfig { nu: self.nu, k: self.k, epsilon: self.epsilon, max_iterations: self.max_iterations, objective }
    }

    /// The grid to cross-validate over, if any.
    pub fn grid(&self, objective: Objective) -> Option<Vec<f64>> {
        match (&self.nu_grid, self.default_grid) {
            (Some(g), _) => Some(g.clone()),
            (None, true) => Some(default_nu_grid(objective)),
            (None, false) => None,
        }
    }
}

fn default_splits() -> usize {
    10
}

fn default_method() -> Method {
    Method::CmcTop
}

fn default_ranks() -> Vec<usize> {
    DEFAULT_RANKS.to_vec()
}

/// A complete, serializable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_splits")]
    pub num_splits: usize,
    #[serde(default = "default_method")]
    pub objective: Method,
    #[serde(default = "default_ranks")]
    pub ranks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub data: DataSpec,
    #[serde(default)]
    pub split: SplitSizes,
    #[serde(default)]
    pub bank: BankSpec,
    #[serde(default)]
    pub training: TrainingSpec,
}

impl ExperimentConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ExperimentError> {
        let mut config: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        for p in &mut config.data.paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut config.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        match (self.data.paths.is_empty(), &self.data.synth) {
            (true, None) => return bad("data needs either paths or a synth spec".into()),
            (false, Some(_)) => return bad("data paths and synth spec are mutually exclusive".into()),
            (true, Some(s)) => s.validate()?,
            _ => {}
        }
        if self.num_splits == 0 {
            return bad("num_splits must be at least 1".into());
        }
        if self.ranks.iter().any(|&r| r == 0) {
            return bad("ranks are 1-based".into());
        }
        let t = &self.training;
        if let Some(g) = &t.nu_grid {
            if g.is_empty() {
                return bad("nu_grid is empty".into());
            }
        }
        if t.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", t.folds));
        }
        if let Some(obj) = self.objective.objective() {
            // k against m is checked once the split sizes are known
            let probe = TrainingConfig { k: 1, ..t.config(obj) };
            probe.validate(2).map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
