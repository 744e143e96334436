//! Synthetic paired structural/functional datasets with planted
//! communities and a planted class signal.
//!
//! Structure: a stochastic block model on `communities` equal blocks (the
//! remainder goes to the last block) with uniform `(0, w_scale)` weights.
//! Function: a block correlation template (0.6 within, 0.1 between) plus
//! symmetric Gaussian noise, clipped to `[-1, 1]` with a unit diagonal.
//! Class-1 subjects get `+signal` on the correlations between blocks 0
//! and 1, so only the functional view carries the label.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NetworkInstance;
use crate::linalg::Matrix;
use crate::rng::{derived_rng, stream};

pub const WITHIN_BLOCK_CORRELATION: f64 = 0.6;
pub const BETWEEN_BLOCK_CORRELATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub w_scale: f64,
    pub signal: f64,
    pub noise: f64,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 90,
            communities: 4,
            p_in: 0.6,
            p_out: 0.05,
            w_scale: 1.0,
            signal: 0.4,
            noise: 0.3,
            per_class: 20,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return Err(Error::invalid(format!(
                "need 0 <= p_out < p_in <= 1, got p_in = {}, p_out = {}",
                self.p_in, self.p_out
            )));
        }
        if !(self.signal >= 0.0 && self.noise >= 0.0) {
            return Err(Error::invalid("signal and noise must be non-negative"));
        }
        if !(self.w_scale > 0.0) {
            return Err(Error::invalid("w_scale must be positive"));
        }
        if self.communities == 0 || self.n < self.communities {
            return Err(Error::invalid(format!("cannot plant {} communities in {} nodes", self.communities, self.n)));
        }
        if self.per_class == 0 {
            return Err(Error::invalid("per_class must be at least 1"));
        }
        Ok(())
    }

    /// Planted block of every node.
    pub fn planted_membership(&self) -> Vec<usize> {
        let size = self.n / self.communities;
        (0..self.n).map(|i| (i / size).min(self.communities - 1)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub instances: Vec<NetworkInstance>,
    /// Block membership shared by every subject.
    pub planted: Vec<usize>,
}

/// Instances are `subject-000…`, the first `per_class` labeled 0.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let planted = config.planted_membership();
    let total = 2 * config.per_class;
    let instances = (0..total)
        .map(|k| {
            let label = u8::from(k >= config.per_class);
            let mut rng = derived_rng(config.seed, stream::GENERATE, k as u64);
            let structural = sample_structural(config, &planted, &mut rng);
            let functional = sample_functional(config, &planted, label, &mut rng);
            NetworkInstance::new(format!("subject-{k:03}"), structural, functional, label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticDataset { instances, planted })
}

fn sample_structural(config: &GeneratorConfig, planted: &[usize], rng: &mut crate::rng::Rng) -> Matrix {
    let n = config.n;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if planted[i] == planted[j] { config.p_in } else { config.p_out };
            if p > 0.0 && rng.random_bool(p) {
                let w = rng.random_range(0.0..config.w_scale);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    a
}

fn is_signal_pair(a: usize, b: usize, communities: usize) -> bool {
    if communities < 2 {
        return a == 0 && b == 0;
    }
    (a == 0 && b == 1) || (a == 1 && b == 0)
}

fn sample_functional(config: &GeneratorConfig, planted: &[usize], label: u8, rng: &mut crate::rng::Rng) -> Matrix {
    let n = config.n;
    let mut f = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (bi, bj) = (planted[i], planted[j]);
            let mut base = if bi == bj { WITHIN_BLOCK_CORRELATION } else { BETWEEN_BLOCK_CORRELATION };
            if label == 1 && is_signal_pair(bi, bj, config.communities) {
                base += config.signal;
            }
            let e: f64 = StandardNormal.sample(rng);
            let v = (base + config.noise * e).clamp(-1.0, 1.0);
            f[(i, j)] = v;
            f[(j, i)] = v;
        }
    }
    f
}

/// Stratified split: each class is shuffled and `round(fraction · size)` of
/// it (kept within `1..size`) goes to training. Both index lists are sorted.
pub fn split_dataset(labels: &[u8], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let mut rng = derived_rng(seed, stream::SPLIT, 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 2 {
            return Err(Error::SingleClass(format!(
                "split: class {class} has {} member(s), need at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let k = libm::round(train_fraction * members.len() as f64) as usize;
        let k = k.clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
