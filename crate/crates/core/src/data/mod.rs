//! Dataset model, feature-file ingestion, split generation, synthetic data
//! and distance-tensor construction.

mod io;
mod split;
mod synth;
mod tensor;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_dataset, parse_dataset, write_dataset};
pub use split::{generate_splits, split_seed, Split, SplitSizes};
pub use synth::{synth_generate, SynthChannel, SynthConfig, SynthKind};
pub use tensor::{build_distance_tensor, DistanceTensor, TensorError, TENSOR_MAGIC};

/// Camera view of a sample. Probes come from view A, gallery from view B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    A,
    B,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            View::A => f.write_str("A"),
            View::B => f.write_str("B"),
        }
    }
}

/// Name and fixed dimension of one feature channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSchema {
    pub name: String,
    pub dim: usize,
}

/// One image of one individual, already reduced to feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    pub individual_id: String,
    pub view: View,
    pub channels: Vec<(String, Vec<f64>)>,
}

/// An individual with its view-A and view-B channel vectors, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Individual {
    pub fn view(&self, view: View) -> &[Vec<f64>] {
        match view {
            View::A => &self.a,
            View::B => &self.b,
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: dimension mismatch for channel {channel:?}: expected {expected}, found {found}")]
    DimensionMismatch {
        file: PathBuf,
        line: usize,
        channel: String,
        expected: usize,
        found: usize,
    },
    #[error("{file}:{line}: duplicate sample (id {id:?}, view {view}, channel {channel:?})")]
    Duplicate {
        file: PathBuf,
        line: usize,
        id: String,
        view: View,
        channel: String,
    },
    #[error("{file}:{line}: individual {id:?} has view {present} but is missing counterpart view {missing}")]
    MissingView {
        file: PathBuf,
        line: usize,
        id: String,
        present: View,
        missing: View,
    },
    #[error("individual {id:?} view {view} lacks channel {channel:?}")]
    MissingChannel {
        id: String,
        view: View,
        channel: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown individual id {0:?}")]
    UnknownId(String),
    #[error("invalid split request: {0}")]
    SplitSize(String),
    #[error("invalid synthetic configuration: {0}")]
    Synth(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// A single-shot re-identification dataset: every individual has exactly one
/// sample per view, and all samples share one channel schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<ChannelSchema>,
    individuals: Vec<Individual>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Builds a dataset from complete individuals, validating the schema and
    /// the single-shot invariants.
    pub fn new(schema: Vec<ChannelSchema>, individuals: Vec<Individual>) -> Result<Self, DataError> {
        if schema.is_empty() {
            return Err(DataError::Invalid("no feature channels".into()));
        }
        if individuals.len() < 2 {
            return Err(DataError::Invalid(format!(
                "need at least 2 individuals, got {}",
                individuals.len()
            )));
        }
        let mut names = HashMap::new();
        for (c, ch) in schema.iter().enumerate() {
            if ch.dim == 0 {
                return Err(DataError::Invalid(format!("channel {:?} has dimension 0", ch.name)));
            }
            if names.insert(ch.name.clone(), c).is_some() {
                return Err(DataError::Invalid(format!("channel {:?} listed twice", ch.name)));
            }
        }
        let mut index = HashMap::with_capacity(individuals.len());
        for (i, ind) in individuals.iter().enumerate() {
            if index.insert(ind.id.clone(), i).is_some() {
                return Err(DataError::Invalid(format!("individual {:?} listed twice", ind.id)));
            }
            for view in [View::A, View::B] {
                let vectors = ind.view(view);
                if vectors.len() != schema.len() {
                    return Err(DataError::Invalid(format!(
                        "individual {:?} view {view} has {} channels, schema has {}",
                        ind.id,
                        vectors.len(),
                        schema.len()
                    )));
                }
                for (v, ch) in vectors.iter().zip(&schema) {
                    if v.len() != ch.dim {
                        return Err(DataError::Invalid(format!(
                            "individual {:?} view {view} channel {:?}: dimension {} != {}",
                            ind.id,
                            ch.name,
                            v.len(),
                            ch.dim
                        )));
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(DataError::Invalid(format!(
                            "individual {:?} view {view} channel {:?} has non-finite entries",
                            ind.id, ch.name
                        )));
                    }
                }
            }
        }
        Ok(Self {
            schema,
            individuals,
            index,
        })
    }

    /// Groups loose samples into individuals. Channel order follows the first
    /// sample; every other sample must carry the same channels.
    pub fn from_samples(samples: Vec<FeatureSample>) -> Result<Self, DataError> {
        let first = samples
            .first()
            .ok_or_else(|| DataError::Invalid("no samples".into()))?;
        let schema: Vec<ChannelSchema> = first
            .channels
            .iter()
            .map(|(name, v)| ChannelSchema {
                name: name.clone(),
                dim: v.len(),
            })
            .collect();
        let mut order: Vec<String> = Vec::new();
        let mut views: HashMap<String, [Option<Vec<Vec<f64>>>; 2]> = HashMap::new();
        for s in samples {
            let names_match = s.channels.len() == schema.len()
                && s.channels.iter().zip(&schema).all(|((n, _), c)| *n == c.name);
            if !names_match {
                return Err(DataError::Invalid(format!(
                    "sample ({:?}, {}) does not follow the channel schema",
                    s.individual_id, s.view
                )));
            }
            let slot = views.entry(s.individual_id.clone()).or_insert_with(|| {
                order.push(s.individual_id.clone());
                [None, None]
            });
            let k = s.view as usize;
            if slot[k].is_some() {
                return Err(DataError::Invalid(format!(
                    "duplicate sample ({:?}, {})",
                    s.individual_id, s.view
                )));
            }
            slot[k] = Some(s.channels.into_iter().map(|(_, v)| v).collect());
        }
        let mut individuals = Vec::with_capacity(order.len());
        for id in order {
            let [a, b] = views.remove(&id).expect("id recorded in order");
            match (a, b) {
                (Some(a), Some(b)) => individuals.push(Individual { id, a, b }),
                (Some(_), None) | (None, Some(_)) => {
                    return Err(DataError::Invalid(format!(
                        "individual {id:?} is missing counterpart view"
                    )))
                }
                (None, None) => unreachable!(),
            }
        }
        Self::new(schema, individuals)
    }

    /// All samples, view A before view B for each individual.
    pub fn samples(&self) -> Vec<FeatureSample> {
        let mut out = Vec::with_capacity(2 * self.individuals.len());
        for ind in &self.individuals {
            for view in [View::A, View::B] {
                out.push(FeatureSample {
                    individual_id: ind.id.clone(),
                    view,
                    channels: self
                        .schema
                        .iter()
                        .zip(ind.view(view))
                        .map(|(c, v)| (c.name.clone(), v.clone()))
                        .collect(),
                });
            }
        }
        out
    }

    pub fn schema(&self) -> &[ChannelSchema] {
        &self.schema
    }

    /// Number of individuals `m`.
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.individuals.iter().map(|i| i.id.as_str())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn indices_of<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>, DataError> {
        ids.iter()
            .map(|id| {
                self.index_of(id.as_ref())
                    .ok_or_else(|| DataError::UnknownId(id.as_ref().to_string()))
            })
            .collect()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    /// Channel vector of individual `idx` in `view`.
    pub fn vector(&self, idx: usize, view: View, channel: usize) -> &[f64] {
        &self.individuals[idx].view(view)[channel]
    }
}
