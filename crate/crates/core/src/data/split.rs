use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// One train/test partition of the individuals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub index: usize,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Explicit partition sizes. With neither set, `ceil(m/2)` individuals train
/// and the rest test; with one set, the other takes the remainder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: Option<usize>,
    pub test: Option<usize>,
}

impl SplitSizes {
    pub fn resolve(&self, m: usize) -> Result<(usize, usize), DataError> {
        let (train, test) = match (self.train, self.test) {
            (None, None) => (m.div_ceil(2), m - m.div_ceil(2)),
            (Some(tr), None) => (tr, m.checked_sub(tr).unwrap_or(usize::MAX)),
            (None, Some(te)) => (m.checked_sub(te).unwrap_or(usize::MAX), te),
            (Some(tr), Some(te)) => (tr, te),
        };
        if train == usize::MAX || test == usize::MAX || train.saturating_add(test) > m {
            return Err(DataError::SplitSize(format!(
                "train {:?} + test {:?} exceeds {m} individuals",
                self.train, self.test
            )));
        }
        if train == 0 || test == 0 {
            return Err(DataError::SplitSize(format!(
                "train ({train}) and test ({test}) must both be nonempty"
            )));
        }
        Ok((train, test))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of split `index` under the top-level `seed`:
/// `splitmix64(seed ^ splitmix64(index))`.
pub fn split_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// Draws `num_splits` random partitions. Within each split the ids keep
/// dataset order.
pub fn generate_splits(
    dataset: &Dataset,
    num_splits: usize,
    seed: u64,
    sizes: SplitSizes,
) -> Result<Vec<Split>, DataError> {
    if num_splits == 0 {
        return Err(DataError::SplitSize("num_splits must be at least 1".into()));
    }
    let m = dataset.len();
    let (n_train, n_test) = sizes.resolve(m)?;
    Ok((0..num_splits)
        .map(|index| {
            let s = split_seed(seed, index);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rng);
            let mut train: Vec<usize> = perm[..n_train].to_vec();
            let mut test: Vec<usize> = perm[n_train..n_train + n_test].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            let ids = |v: Vec<usize>| {
                v.into_iter()
                    .map(|i| dataset.individuals()[i].id.clone())
                    .collect()
            };
            Split {
                index,
                seed: s,
                train_ids: ids(train),
                test_ids: ids(test),
            }
        })
        .collect())
}
