use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::kernel::{pair_distances, sigma_from_quantile, KernelKind, KernelParams, DEFAULT_TAU};
use super::kissme::{kissme_from_covariances, MahalanobisMetric, PairScatter};
use super::klfda::{klfda_fit, KlfdaOptions};
use super::pca::pca_fit;
use super::{MetricError, SquaredEuclidean, TrainedMetric};
use crate::data::{ChannelSchema, Dataset, View};
use crate::par;

fn yes() -> bool {
    true
}

fn default_beta() -> f64 {
    0.01
}

fn default_knn() -> usize {
    7
}

fn default_max_pairs() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum LearnerSpec {
    Euclidean,
    Kissme {
        pca_dim: usize,
        #[serde(default = "yes")]
        regularize: bool,
    },
    Klfda {
        kernel: KernelKind,
        /// Quantile of training pair distances used as `sigma2`.
        quantile: f64,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        #[serde(default = "default_knn")]
        knn: usize,
        /// Optional PCA before the kernel; off unless set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pca_dim: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub channel: String,
    #[serde(flatten)]
    pub learner: LearnerSpec,
}

impl BankEntry {
    /// `channel/learner/params`.
    pub fn label(&self) -> String {
        let ch = &self.channel;
        match &self.learner {
            LearnerSpec::Euclidean => format!("{ch}/euclidean"),
            LearnerSpec::Kissme { pca_dim, .. } => format!("{ch}/kissme/pca{pca_dim}"),
            LearnerSpec::Klfda {
                kernel,
                quantile,
                beta,
                dim,
                knn,
                pca_dim,
            } => {
                let mut s = format!("{ch}/klfda/{}-q{quantile}-b{beta}", kernel.name());
                if let Some(r) = dim {
                    s.push_str(&format!("-r{r}"));
                }
                if *knn != 7 {
                    s.push_str(&format!("-k{knn}"));
                }
                if let Some(d) = pca_dim {
                    s.push_str(&format!("-pca{d}"));
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub entries: Vec<BankEntry>,
    /// Cap on sampled pairs when estimating kernel widths.
    #[serde(default = "default_max_pairs")]
    pub max_sigma_pairs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BankConfig {
    pub fn new(entries: Vec<BankEntry>) -> Self {
        Self {
            entries,
            max_sigma_pairs: default_max_pairs(),
            seed: 0,
        }
    }

    /// Per channel: KISSME at PCA dimensions 32, 48 and 64, and kLFDA with
    /// `kernel` at the 5th, 10th and 25th percentile of pair distances.
    /// PCA dimensions above `max_pca` (or the channel dimension) are
    /// dropped; when none fit, the largest feasible one is used.
    pub fn multi_metric(schema: &[ChannelSchema], kernel: KernelKind, max_pca: usize) -> Self {
        let mut entries = Vec::new();
        for c in schema {
            let cap = c.dim.min(max_pca);
            let mut dims: Vec<usize> = [32, 48, 64].into_iter().filter(|&d| d <= cap).collect();
            if dims.is_empty() && cap > 0 {
                dims.push(cap);
            }
            for d in dims {
                entries.push(BankEntry {
                    channel: c.name.clone(),
                    learner: LearnerSpec::Kissme {
                        pca_dim: d,
                        regularize: true,
                    },
                });
            }
            for q in [0.05, 0.10, 0.25] {
                entries.push(BankEntry {
                    channel: c.name.clone(),
                    learner: LearnerSpec::Klfda {
                        kernel,
                        quantile: q,
                        beta: 0.01,
                        dim: None,
                        knn: 7,
                        pca_dim: None,
                    },
                });
            }
        }
        Self::new(entries)
    }

    pub fn labels(&self) -> Result<Vec<String>, MetricError> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .map(|e| {
                let l = e.label();
                if seen.insert(l.clone()) {
                    Ok(l)
                } else {
                    Err(MetricError::DuplicateLabel(l))
                }
            })
            .collect()
    }
}

fn fit_entry(entry: &BankEntry, label: &str, dataset: &Dataset, idx: &[usize], config: &BankConfig) -> Result<TrainedMetric, MetricError> {
    let c = dataset
        .channel_index(&entry.channel)
        .ok_or_else(|| MetricError::UnknownChannel {
            label: label.to_string(),
            channel: entry.channel.clone(),
        })?;
    let a: Vec<&[f64]> = idx.iter().map(|&i| dataset.vector(i, View::A, c)).collect();
    let b: Vec<&[f64]> = idx.iter().map(|&i| dataset.vector(i, View::B, c)).collect();
    match &entry.learner {
        LearnerSpec::Euclidean => Ok(TrainedMetric::Euclidean(
            SquaredEuclidean::new(entry.channel.clone())
                .with_label(label)
                .with_dim(dataset.schema()[c].dim),
        )),
        LearnerSpec::Kissme { pca_dim, regularize } => {
            let all: Vec<&[f64]> = a.iter().chain(&b).copied().collect();
            let pca = pca_fit(&all, *pca_dim)?;
            let pa = a.iter().map(|x| pca.apply(x)).collect::<Result<Vec<_>, _>>()?;
            let pb = b.iter().map(|x| pca.apply(x)).collect::<Result<Vec<_>, _>>()?;
            let mut similar = PairScatter::new(*pca_dim);
            for (x, y) in pa.iter().zip(&pb) {
                similar.add(x, y);
            }
            let mut dissimilar = PairScatter::new(*pca_dim);
            dissimilar.add_cross_pairs(&pa, &pb);
            let m = kissme_from_covariances(&similar.covariance()?, &dissimilar.covariance()?, *regularize)?;
            Ok(TrainedMetric::Kissme(MahalanobisMetric::new(label, entry.channel.clone(), pca, m)?))
        }
        LearnerSpec::Klfda {
            kernel,
            quantile,
            beta,
            dim,
            knn,
            pca_dim,
        } => {
            let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(2 * idx.len());
            let mut labels = Vec::with_capacity(2 * idx.len());
            for (k, (x, y)) in a.iter().zip(&b).enumerate() {
                vectors.push(x.to_vec());
                vectors.push(y.to_vec());
                labels.push(k);
                labels.push(k);
            }
            let pca = match pca_dim {
                Some(d) => {
                    let p = pca_fit(&vectors, *d)?;
                    vectors = vectors.iter().map(|v| p.apply(v)).collect::<Result<_, _>>()?;
                    Some(p)
                }
                None => None,
            };
            if *kernel == KernelKind::Chi2Rbf && vectors.iter().flatten().any(|v| *v < 0.0) {
                return Err(MetricError::InvalidInput(format!(
                    "channel {:?} has negative entries; chi2_rbf needs histogram features, use gauss_rbf",
                    entry.channel
                )));
            }
            let dists = pair_distances(&vectors, *kernel, DEFAULT_TAU, config.max_sigma_pairs, config.seed);
            let sigma2 = sigma_from_quantile(&dists, *quantile)?;
            let params = KernelParams::new(*kernel, sigma2)?;
            let train: Vec<(Vec<f64>, usize)> = vectors.into_iter().zip(labels).collect();
            let mut model = klfda_fit(
                &train,
                params,
                KlfdaOptions {
                    beta: *beta,
                    dim: *dim,
                    knn: *knn,
                },
            )?
            .with_names(label, entry.channel.clone());
            if let Some(p) = pca {
                model = model.with_pca(p);
            }
            Ok(TrainedMetric::Klfda(model))
        }
    }
}

/// Fits every configured metric on the individuals `train_ids`. Metrics are
/// fitted concurrently; the result follows config order, and the first
/// failing entry (in config order) aborts the whole bank.
pub fn build_metric_bank<S: AsRef<str> + Sync>(
    dataset: &Dataset,
    train_ids: &[S],
    config: &BankConfig,
) -> Result<Vec<TrainedMetric>, MetricError> {
    if config.entries.is_empty() {
        return Err(MetricError::InvalidInput("bank config has no entries".into()));
    }
    let labels = config.labels()?;
    let idx = dataset.indices_of(train_ids)?;
    if idx.len() < 2 {
        return Err(MetricError::InvalidInput("need at least 2 training individuals".into()));
    }
    let jobs: Vec<(&BankEntry, &String)> = config.entries.iter().zip(&labels).collect();
    par::try_map_slice(&jobs, |(entry, label)| {
        fit_entry(entry, label, dataset, &idx, config).map_err(|e| MetricError::Bank {
            label: label.to_string(),
            source: Box::new(e),
        })
    })
}
