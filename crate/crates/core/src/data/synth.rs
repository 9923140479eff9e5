//! Seeded synthetic datasets with controllable per-channel signal.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ChannelSchema, DataError, Dataset, Individual};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// Both views lie within `delta` of a private anchor; anchors sit on a
    /// lattice of spacing `margin`, so nearest-neighbour matching is exact
    /// whenever `4 * delta < margin`.
    Oracle { margin: f64, delta: f64 },
    /// Both views drawn independently from `N(0, scale^2 I)`.
    Noise { scale: f64 },
    /// Anchor from `N(0, spread^2 I)`, each view anchor plus `N(0, noise^2 I)`.
    Partial { spread: f64, noise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthChannel {
    pub name: String,
    pub dim: usize,
    #[serde(flatten)]
    pub kind: SynthKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub m: usize,
    pub seed: u64,
    pub channels: Vec<SynthChannel>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::Synth(msg));
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if self.channels.is_empty() {
            return bad("at least one channel is required".into());
        }
        let mut names = HashSet::new();
        for ch in &self.channels {
            if !names.insert(ch.name.as_str()) {
                return bad(format!("channel {:?} listed twice", ch.name));
            }
            if ch.dim == 0 {
                return bad(format!("channel {:?}: dim must be at least 1", ch.name));
            }
            let nonneg = |x: f64| x.is_finite() && x >= 0.0;
            match ch.kind {
                SynthKind::Oracle { margin, delta } => {
                    if !(margin.is_finite() && margin > 0.0) || !nonneg(delta) {
                        return bad(format!("channel {:?}: margin must be > 0 and delta >= 0", ch.name));
                    }
                    if 4.0 * delta >= margin {
                        return bad(format!(
                            "channel {:?}: infeasible oracle, 4*delta = {} must be below margin {} \
                             in ambient dimension {} for m = {}",
                            ch.name,
                            4.0 * delta,
                            margin,
                            ch.dim,
                            self.m
                        ));
                    }
                }
                SynthKind::Noise { scale } => {
                    if !nonneg(scale) {
                        return bad(format!("channel {:?}: noise scale must be >= 0", ch.name));
                    }
                }
                SynthKind::Partial { spread, noise } => {
                    if !nonneg(spread) || !nonneg(noise) {
                        return bad(format!("channel {:?}: spread and noise must be >= 0", ch.name));
                    }
                }
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Uniform point in the ball of radius `r`.
fn in_ball(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    let dir = gaussian(rng, dim, 1.0);
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let radius = r * u.powf(1.0 / dim as f64);
    if norm == 0.0 {
        return vec![0.0; dim];
    }
    dir.into_iter().map(|x| x / norm * radius).collect()
}

/// Smallest lattice side `s` with `s^dim >= 2m`.
fn lattice_side(m: usize, dim: usize) -> u64 {
    let target = 2 * m as u128;
    let mut s: u64 = 2;
    loop {
        let mut cap: u128 = 1;
        for _ in 0..dim {
            cap = cap.saturating_mul(s as u128);
            if cap >= target {
                return s;
            }
        }
        s += 1;
    }
}

fn oracle_anchors(rng: &mut ChaCha8Rng, m: usize, dim: usize, margin: f64) -> Vec<Vec<f64>> {
    let side = lattice_side(m, dim);
    let mut seen = HashSet::with_capacity(m);
    let mut anchors = Vec::with_capacity(m);
    while anchors.len() < m {
        let cell: Vec<u64> = (0..dim).map(|_| rng.random_range(0..side)).collect();
        if seen.insert(cell.clone()) {
            anchors.push(cell.into_iter().map(|c| c as f64 * margin).collect());
        }
    }
    anchors
}

/// Generates a deterministic dataset with ids `id0000, id0001, ...`.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let m = config.m;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut a: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(config.channels.len()); m];
    let mut b = a.clone();
    for ch in &config.channels {
        let dim = ch.dim;
        match ch.kind {
            SynthKind::Oracle { margin, delta } => {
                let anchors = oracle_anchors(&mut rng, m, dim, margin);
                for (i, anchor) in anchors.iter().enumerate() {
                    for views in [&mut a, &mut b] {
                        let off = in_ball(&mut rng, dim, delta);
                        views[i].push(anchor.iter().zip(off).map(|(x, o)| x + o).collect());
                    }
                }
            }
            SynthKind::Noise { scale } => {
                for i in 0..m {
                    a[i].push(gaussian(&mut rng, dim, scale));
                    b[i].push(gaussian(&mut rng, dim, scale));
                }
            }
            SynthKind::Partial { spread, noise } => {
                for i in 0..m {
                    let anchor = gaussian(&mut rng, dim, spread);
                    for views in [&mut a, &mut b] {
                        let e = gaussian(&mut rng, dim, noise);
                        views[i].push(anchor.iter().zip(e).map(|(x, n)| x + n).collect());
                    }
                }
            }
        }
    }
    let width = (m.saturating_sub(1)).to_string().len().max(4);
    let individuals = a
        .into_iter()
        .zip(b)
        .enumerate()
        .map(|(i, (a, b))| Individual {
            id: format!("id{i:0width$}"),
            a,
            b,
        })
        .collect();
    let schema = config
        .channels
        .iter()
        .map(|c| ChannelSchema {
            name: c.name.clone(),
            dim: c.dim,
        })
        .collect();
    Dataset::new(schema, individuals)
}
