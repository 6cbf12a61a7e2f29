//! Hitting-scenario distribution: block weights, exact enumeration for
//! small `k` and the random-scan Gibbs sampler.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DependenceModel, SiteSet};
use crate::intensity::{BlockWeight, LatentCovariance};
use crate::partition::{enumerate_partitions, Partition, MAX_SITES};
use crate::rectprob::QmcConfig;
use crate::rng::{derive_seed, stream};

/// Largest `k` for which the scenario distribution is enumerated.
pub const MAX_EXACT_K: usize = 6;

/// Block weights `w_{tau,j}` for one conditioning set, cached by block.
///
/// A block's weight depends only on which sites it holds, so the cache key
/// is the block's bit mask. Each rectangle probability is estimated with a
/// random stream derived from `(seed, mask)`, which freezes its Monte Carlo
/// noise: the same block always gets the same weight.
#[derive(Debug, Clone)]
pub struct ScenarioWeights {
    latent: LatentCovariance,
    z: Vec<f64>,
    qmc: QmcConfig,
    seed: u64,
    cache: HashMap<u64, BlockWeight>,
}

impl ScenarioWeights {
    pub fn new(
        model: &DependenceModel,
        x: &SiteSet,
        z: &[f64],
        qmc: QmcConfig,
        seed: u64,
    ) -> Result<Self> {
        Self::from_latent(LatentCovariance::new(model, x)?, z, qmc, seed)
    }

    pub fn from_latent(
        latent: LatentCovariance,
        z: &[f64],
        qmc: QmcConfig,
        seed: u64,
    ) -> Result<Self> {
        let k = latent.len();
        if k == 0 || k > MAX_SITES {
            return Err(Error::Capacity(format!(
                "between 1 and {MAX_SITES} conditioning sites are supported, got {k}"
            )));
        }
        if z.len() != k {
            return Err(Error::Dimension(format!(
                "{} values for {k} sites",
                z.len()
            )));
        }
        if let Some(v) = z.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!(
                "conditioning values must be positive and finite, got {v}"
            )));
        }
        Ok(ScenarioWeights {
            latent,
            z: z.to_vec(),
            qmc,
            seed,
            cache: HashMap::new(),
        })
    }

    /// Number of conditioning sites.
    pub fn k(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn latent(&self) -> &LatentCovariance {
        &self.latent
    }

    /// Number of distinct blocks evaluated so far.
    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Weight of the block whose sites are the set bits of `mask`.
    pub fn block(&mut self, mask: u64) -> Result<BlockWeight> {
        if let Some(w) = self.cache.get(&mask) {
            return Ok(*w);
        }
        let k = self.k();
        if mask == 0 || (k < 64 && mask >> k != 0) {
            return Err(Error::Domain(format!(
                "block mask {mask:#x} is not a subset of {k} sites"
            )));
        }
        let block: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let mut rng = stream(derive_seed(self.seed, mask), 0);
        let w = self
            .latent
            .block_weight(&block, &self.z, &self.qmc, &mut rng)?;
        self.cache.insert(mask, w);
        Ok(w)
    }

    pub fn log_weight(&mut self, mask: u64) -> Result<f64> {
        Ok(self.block(mask)?.log_weight)
    }

    /// `sum_j log w_{tau,j}`, the unnormalized log probability of `tau`.
    pub fn log_partition_weight(&mut self, tau: &Partition) -> Result<f64> {
        self.check(tau)?;
        tau.block_masks()
            .into_iter()
            .map(|m| self.log_weight(m))
            .sum()
    }

    fn check(&self, tau: &Partition) -> Result<()> {
        if tau.len() == self.k() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "partition of {} sites for {} conditioning sites",
                tau.len(),
                self.k()
            )))
        }
    }
}

/// `pi_x(z, tau)` over all partitions of the conditioning sites.
#[derive(Debug, Clone)]
pub struct ScenarioDistribution {
    pub partitions: Vec<Partition>,
    pub probs: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl ScenarioDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Partition {
        &self.partitions[sample_index(&self.probs, rng)]
    }

    pub fn prob(&self, tau: &Partition) -> f64 {
        self.partitions
            .iter()
            .position(|p| p == tau)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Probability of each partition size `1..=k`.
    pub fn size_distribution(&self) -> Vec<f64> {
        let k = self.partitions.first().map_or(0, Partition::len);
        let mut out = vec![0.0; k];
        for (p, w) in self.partitions.iter().zip(&self.probs) {
            out[p.size() - 1] += w;
        }
        out
    }
}

/// Enumerates every partition and normalizes the products of block weights.
pub fn exact_scenario_distribution(weights: &mut ScenarioWeights) -> Result<ScenarioDistribution> {
    let k = weights.k();
    if k > MAX_EXACT_K {
        return Err(Error::Capacity(format!(
            "exact scenario distribution supports k <= {MAX_EXACT_K}, got {k}"
        )));
    }
    let partitions = enumerate_partitions(k)?;
    let log_weights = partitions
        .iter()
        .map(|p| weights.log_partition_weight(p))
        .collect::<Result<Vec<_>>>()?;
    let probs = softmax(&log_weights)
        .ok_or_else(|| Error::Domain("every hitting scenario has zero weight".into()))?;
    Ok(ScenarioDistribution {
        partitions,
        probs,
        log_weights,
    })
}

fn softmax(logs: &[f64]) -> Option<Vec<f64>> {
    let max = logs
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let e: Vec<f64> = logs
        .iter()
        .map(|&v| if v.is_nan() { 0.0 } else { (v - max).exp() })
        .collect();
    let s: f64 = e.iter().sum();
    Some(e.into_iter().map(|v| v / s).collect())
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver at the top
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Full conditional of site `j` (0-based) given the rest of `tau`: the
/// candidate partitions and their probabilities.
pub fn update_distribution(
    weights: &mut ScenarioWeights,
    tau: &Partition,
    j: usize,
) -> Result<Vec<(Partition, f64)>> {
    weights.check(tau)?;
    let aj = tau.labels()[j];
    let bit = 1u64 << j;
    let mask_aj = tau.mask_of(aj);
    let r1 = mask_aj.count_ones();
    let moves = tau.neighbor_moves(j);
    let mut logs = Vec::with_capacity(moves.len());
    for (b, _) in &moves {
        let b = *b;
        let mask_b = tau.mask_of(b);
        let r2 = mask_b.count_ones();
        let log = if b == aj {
            0.0
        } else if r1 == 1 && r2 != 0 {
            weights.log_weight(mask_b | bit)?
                - weights.log_weight(mask_b)?
                - weights.log_weight(mask_aj)?
        } else if r1 != 1 && r2 != 0 {
            weights.log_weight(mask_b | bit)? + weights.log_weight(mask_aj & !bit)?
                - weights.log_weight(mask_b)?
                - weights.log_weight(mask_aj)?
        } else if r1 != 1 {
            weights.log_weight(bit)? + weights.log_weight(mask_aj & !bit)?
                - weights.log_weight(mask_aj)?
        } else {
            // a singleton moved to a fresh block is the same set partition;
            // the move list never offers it
            unreachable!("singleton site {j} offered a fresh block");
        };
        logs.push(log);
    }
    let probs = softmax(&logs).expect("the identity move has weight one");
    Ok(moves.into_iter().map(|m| m.1).zip(probs).collect())
}

/// One random-scan Gibbs update: pick a site uniformly, redraw its block.
pub fn gibbs_step<R: Rng + ?Sized>(
    weights: &mut ScenarioWeights,
    tau: &Partition,
    rng: &mut R,
) -> Result<Partition> {
    let k = weights.k();
    if k == 1 {
        return Ok(tau.clone());
    }
    let j = rng.random_range(0..k);
    let mut cands = update_distribution(weights, tau, j)?;
    let probs: Vec<f64> = cands.iter().map(|c| c.1).collect();
    let i = sample_index(&probs, rng);
    Ok(cands.swap_remove(i).0)
}

/// One-step transition matrix of the random-scan sampler over `states`,
/// which must be closed under single-site moves (e.g. all partitions).
pub fn gibbs_kernel(weights: &mut ScenarioWeights, states: &[Partition]) -> Result<DMatrix<f64>> {
    let n = states.len();
    let index: HashMap<&Partition, usize> =
        states.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let k = weights.k();
    let mut kern = DMatrix::zeros(n, n);
    for (a, tau) in states.iter().enumerate() {
        for j in 0..k {
            for (next, p) in update_distribution(weights, tau, j)? {
                let b = *index.get(&next).ok_or_else(|| {
                    Error::Domain(format!("state {next} missing from the kernel"))
                })?;
                kern[(a, b)] += p / k as f64;
            }
        }
    }
    Ok(kern)
}

/// Chain settings. `length` counts all iterations, burn-in included, so a
/// chain stores `(length - burn_in) / thinning` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub thinning: usize,
    pub length: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            burn_in: 500,
            thinning: 100,
            length: 10_500,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.length < self.burn_in {
            return Err(Error::Config(format!(
                "chain length {} is shorter than the burn-in {}",
                self.length, self.burn_in
            )));
        }
        Ok(())
    }

    /// Number of stored states.
    pub fn n_states(&self) -> usize {
        (self.length - self.burn_in) / self.thinning
    }
}

#[derive(Debug, Clone)]
pub struct GibbsChain {
    /// Stored states, after burn-in and thinning.
    pub states: Vec<Partition>,
    /// Iteration number of each stored state.
    pub iterations: Vec<usize>,
    pub config: ChainConfig,
}

/// Runs the sampler from the single-block partition.
pub fn gibbs_chain<R: Rng + ?Sized>(
    weights: &mut ScenarioWeights,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<GibbsChain> {
    config.validate()?;
    let mut tau = Partition::single_block(weights.k());
    let n = config.n_states();
    let mut states = Vec::with_capacity(n);
    let mut iterations = Vec::with_capacity(n);
    let last = config.burn_in + n * config.thinning;
    for t in 1..=last {
        tau = gibbs_step(weights, &tau, rng)?;
        if t > config.burn_in && (t - config.burn_in) % config.thinning == 0 {
            states.push(tau.clone());
            iterations.push(t);
        }
    }
    Ok(GibbsChain {
        states,
        iterations,
        config: *config,
    })
}

/// Frequencies of partition sizes `1..=k` along a chain.
pub fn partition_size_histogram(chain: &GibbsChain) -> Result<Vec<f64>> {
    let Some(first) = chain.states.first() else {
        return Err(Error::Domain("chain has no states".into()));
    };
    let mut out = vec![0.0; first.len()];
    for s in &chain.states {
        out[s.size() - 1] += 1.0;
    }
    let n = chain.states.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}
