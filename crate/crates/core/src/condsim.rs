//! Conditional simulation of a max-stable field given its values at a few
//! sites, unconditional simulation, and the conditional distribution
//! function used to validate both.
//!
//! A conditional realization is built in three steps: draw a hitting
//! scenario (a partition of the conditioning sites), draw one extremal
//! function per block that passes through the data on its block and stays
//! below it elsewhere, then add the atoms of an independent Poisson process
//! that stay below the data everywhere.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DependenceModel, SiteSet, DUPLICATE_EPS};
use crate::gibbs::{
    exact_scenario_distribution, gibbs_step, ChainConfig, ScenarioDistribution, ScenarioWeights,
    MAX_EXACT_K,
};
use crate::intensity::LatentCovariance;
use crate::partition::{Partition, MAX_SITES};
use crate::rectprob::QmcConfig;
use crate::rng::{derive_seed, stream};
use crate::spectral::SpectralField;

pub use crate::spectral::{ExtremalDraw, PoissonMax};

const WEIGHT_STREAM: u64 = 0x7765_6967;
const CDF_STREAM: u64 = 0x6364_6600;

/// When to stop adding Poisson atoms: once `zeta M` drops below the current
/// field minimum, `M` being a bound on the spectral functions that holds
/// with high probability, or after `max_atoms` atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationPolicy {
    /// Brown-Resnick: `M = exp(q max_s sigma(s))`, `sigma(s)^2 = 2 gamma(s)`.
    pub q: f64,
    /// Schlather: `M = sqrt(2 pi) schlather_q`.
    pub schlather_q: f64,
    pub max_atoms: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            q: 4.0,
            schlather_q: 4.5,
            max_atoms: 100_000,
        }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.schlather_q > 0.0) {
            return Err(Error::Config("envelope parameters must be positive".into()));
        }
        if self.max_atoms == 0 {
            return Err(Error::Config("atom cap must be positive".into()));
        }
        Ok(())
    }

    /// The same policy with both envelope parameters doubled.
    pub fn doubled(&self) -> Self {
        TruncationPolicy {
            q: 2.0 * self.q,
            schlather_q: 2.0 * self.schlather_q,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub chain: ChainConfig,
    pub qmc: QmcConfig,
    pub truncation: TruncationPolicy,
    /// Scenarios are enumerated when `k` is at most this, else sampled by
    /// Gibbs.
    pub exact_k_threshold: usize,
    /// Attempts allowed per extremal function.
    pub rejection_cap: u64,
    /// Add a tiny ridge to the joint covariance before factoring it.
    pub ridge: bool,
    /// Seeds the scenario weights and the distribution-function integrals.
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            chain: ChainConfig::default(),
            qmc: QmcConfig::default(),
            truncation: TruncationPolicy::default(),
            exact_k_threshold: 5,
            rejection_cap: 1_000_000,
            ridge: false,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.truncation.validate()?;
        if self.exact_k_threshold > MAX_EXACT_K {
            return Err(Error::Config(format!(
                "exact_k_threshold is at most {MAX_EXACT_K}, got {}",
                self.exact_k_threshold
            )));
        }
        if self.rejection_cap == 0 {
            return Err(Error::Config("rejection cap must be positive".into()));
        }
        if self.qmc.n_points == 0 || self.qmc.n_shifts < 2 {
            return Err(Error::Config(
                "QMC needs points and at least two shifts".into(),
            ));
        }
        Ok(())
    }
}

/// Observed unit Frechet values `z` at sites `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningSet {
    x: SiteSet,
    z: Vec<f64>,
}

impl ConditioningSet {
    pub fn new(x: SiteSet, z: Vec<f64>) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::Dimension(format!(
                "{} sites with {} values",
                x.len(),
                z.len()
            )));
        }
        if x.is_empty() || x.len() > MAX_SITES {
            return Err(Error::Capacity(format!(
                "between 1 and {MAX_SITES} conditioning sites are supported, got {}",
                x.len()
            )));
        }
        if let Some(v) = z.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!(
                "conditioning values must be positive and finite, got {v}"
            )));
        }
        if let Some((i, j)) = x.first_duplicate(DUPLICATE_EPS) {
            return Err(Error::Domain(format!(
                "conditioning sites {} and {} coincide",
                x.label(i),
                x.label(j)
            )));
        }
        Ok(ConditioningSet { x, z })
    }

    pub fn x(&self) -> &SiteSet {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Sites and values reordered as `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let z = order.iter().map(|&i| self.z[i]).collect();
        ConditioningSet::new(self.x.subset(order), z)
    }
}

/// An approximate field realization and its truncation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedField {
    pub values: Vec<f64>,
    pub atoms: usize,
    pub truncated: bool,
}

impl From<PoissonMax> for SimulatedField {
    fn from(p: PoissonMax) -> Self {
        SimulatedField {
            values: p.values,
            atoms: p.atoms,
            truncated: p.truncated,
        }
    }
}

/// Factored once, reused for any number of unconditional realizations.
#[derive(Debug, Clone)]
pub struct UnconditionalSimulator {
    field: SpectralField,
    rows: Vec<usize>,
    envelope: f64,
    max_atoms: usize,
}

impl UnconditionalSimulator {
    pub fn new(
        model: &DependenceModel,
        s: &SiteSet,
        trunc: &TruncationPolicy,
        ridge: bool,
    ) -> Result<Self> {
        trunc.validate()?;
        let field = SpectralField::new(model, &SiteSet::new(Vec::new())?, s, ridge)?;
        let rows: Vec<usize> = (0..s.len()).collect();
        let envelope = field.envelope(&rows, trunc.q, trunc.schlather_q);
        Ok(UnconditionalSimulator {
            field,
            rows,
            envelope,
            max_atoms: trunc.max_atoms,
        })
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> SimulatedField {
        let floor = vec![0.0; self.rows.len()];
        self.field
            .poisson_max(&[], &self.rows, &floor, self.envelope, self.max_atoms, rng)
            .into()
    }
}

/// One approximate realization of the max-stable field at `s`.
pub fn unconditional_simulate<R: Rng + ?Sized>(
    model: &DependenceModel,
    s: &SiteSet,
    rng: &mut R,
    trunc: &TruncationPolicy,
) -> Result<SimulatedField> {
    Ok(UnconditionalSimulator::new(model, s, trunc, false)?.simulate(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Conditioning(usize),
    Field(usize),
}

/// Splits targets into copies of conditioning sites and genuinely new sites.
fn split_targets(x: &SiteSet, s: &SiteSet) -> Result<(Vec<Slot>, SiteSet)> {
    let mut slots = Vec::with_capacity(s.len());
    let mut fresh = Vec::new();
    for j in 0..s.len() {
        match x.find(s.coord(j), DUPLICATE_EPS) {
            Some(i) => slots.push(Slot::Conditioning(i)),
            None => {
                slots.push(Slot::Field(fresh.len()));
                fresh.push(j);
            }
        }
    }
    let sub = if fresh.is_empty() {
        SiteSet::new(Vec::new())?
    } else {
        s.subset(&fresh)
    };
    Ok((slots, sub))
}

/// The extremal function through the data on the conditioning sites in
/// `block` (0-based), kept below the data on the other conditioning sites,
/// evaluated at `s`.
pub fn sample_extremal_function<R: Rng + ?Sized>(
    model: &DependenceModel,
    cond: &ConditioningSet,
    block: &[usize],
    s: &SiteSet,
    rng: &mut R,
    cap: u64,
) -> Result<ExtremalDraw> {
    let (slots, fresh) = split_targets(&cond.x, s)?;
    let field = SpectralField::new(model, &cond.x, &fresh, false)?;
    let mut draw = field.extremal(block, &cond.z, cap, rng)?;
    let values = draw.values.clone();
    draw.values = slots
        .iter()
        .map(|slot| match *slot {
            Slot::Conditioning(i) => draw.conditioning_values[i],
            Slot::Field(j) => values[j],
        })
        .collect();
    Ok(draw)
}

/// The maximum at `s` of the Poisson atoms that stay below the data at
/// every conditioning site; 0 where none survive.
pub fn sample_sub_extremal<R: Rng + ?Sized>(
    model: &DependenceModel,
    cond: &ConditioningSet,
    s: &SiteSet,
    rng: &mut R,
    trunc: &TruncationPolicy,
) -> Result<SimulatedField> {
    trunc.validate()?;
    let (slots, fresh) = split_targets(&cond.x, s)?;
    let k = cond.len();
    let field = SpectralField::new(model, &cond.x, &fresh, false)?;
    let rows: Vec<usize> = slots
        .iter()
        .map(|slot| match *slot {
            Slot::Conditioning(i) => i,
            Slot::Field(j) => k + j,
        })
        .collect();
    let envelope = field.envelope(&rows, trunc.q, trunc.schlather_q);
    let floor = vec![0.0; rows.len()];
    Ok(field
        .poisson_max(&cond.z, &rows, &floor, envelope, trunc.max_atoms, rng)
        .into())
}

/// One draw from the conditional law of the field at the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRealization {
    /// Values at the target sites.
    pub values: Vec<f64>,
    /// Values the construction gives at the conditioning sites; equal to
    /// the data by design.
    pub conditioning_values: Vec<f64>,
    /// Hitting scenario used.
    pub partition: Partition,
    /// Atoms of the sub-extremal process examined.
    pub atoms: usize,
    /// Rejection attempts per block of `partition`.
    pub attempts: Vec<u64>,
    /// The sub-extremal process hit its atom cap.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
enum Scenarios {
    Exact(ScenarioDistribution),
    Gibbs(ScenarioWeights),
}

/// Everything that can be prepared once per conditioning set and target set.
#[derive(Debug, Clone)]
pub struct ConditionalSimulator {
    cond: ConditioningSet,
    config: SimulationConfig,
    field: SpectralField,
    slots: Vec<Slot>,
    rows: Vec<usize>,
    envelope: f64,
    scenarios: Scenarios,
}

impl ConditionalSimulator {
    pub fn new(
        model: &DependenceModel,
        cond: &ConditioningSet,
        s: &SiteSet,
        config: &SimulationConfig,
    ) -> Result<Self> {
        config.validate()?;
        let (slots, fresh) = split_targets(&cond.x, s)?;
        let k = cond.len();
        let field = SpectralField::new(model, &cond.x, &fresh, config.ridge)?;
        let rows: Vec<usize> = (k..k + fresh.len()).collect();
        let envelope = field.envelope(&rows, config.truncation.q, config.truncation.schlather_q);
        let mut weights = ScenarioWeights::new(
            model,
            &cond.x,
            &cond.z,
            config.qmc,
            derive_seed(config.seed, WEIGHT_STREAM),
        )
        .map_err(|e| e.in_step("scenario weights"))?;
        let scenarios = if k <= config.exact_k_threshold {
            Scenarios::Exact(
                exact_scenario_distribution(&mut weights)
                    .map_err(|e| e.in_step("scenario weights"))?,
            )
        } else {
            Scenarios::Gibbs(weights)
        };
        Ok(ConditionalSimulator {
            cond: cond.clone(),
            config: *config,
            field,
            slots,
            rows,
            envelope,
            scenarios,
        })
    }

    pub fn conditioning(&self) -> &ConditioningSet {
        &self.cond
    }

    pub fn n_targets(&self) -> usize {
        self.slots.len()
    }

    /// The enumerated scenario law, when `k` is small enough.
    pub fn scenario_distribution(&self) -> Option<&ScenarioDistribution> {
        match &self.scenarios {
            Scenarios::Exact(d) => Some(d),
            Scenarios::Gibbs(_) => None,
        }
    }

    /// `n` hitting scenarios. Enumerated laws give independent draws; the
    /// Gibbs sampler gives the states of one chain after burn-in, spaced by
    /// the thinning lag.
    pub fn draw_partitions<R: Rng + ?Sized>(
        &mut self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Partition>> {
        match &mut self.scenarios {
            Scenarios::Exact(d) => Ok((0..n).map(|_| d.sample(rng).clone()).collect()),
            Scenarios::Gibbs(w) => {
                let chain = self.config.chain;
                let mut tau = Partition::single_block(w.k());
                let mut out = Vec::with_capacity(n);
                for _ in 0..chain.burn_in {
                    tau = gibbs_step(w, &tau, rng).map_err(|e| e.in_step("hitting scenario"))?;
                }
                for _ in 0..n {
                    for _ in 0..chain.thinning {
                        tau =
                            gibbs_step(w, &tau, rng).map_err(|e| e.in_step("hitting scenario"))?;
                    }
                    out.push(tau.clone());
                }
                Ok(out)
            }
        }
    }

    /// Steps two and three for a given scenario.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        tau: &Partition,
        rng: &mut R,
    ) -> Result<ConditionalRealization> {
        let k = self.cond.len();
        if tau.len() != k {
            return Err(Error::Dimension(format!(
                "partition of {} sites for {k} conditioning sites",
                tau.len()
            )));
        }
        let z = &self.cond.z;
        let mut plus = vec![0.0f64; self.rows.len()];
        let mut at_x = vec![0.0f64; k];
        let mut attempts = Vec::with_capacity(tau.size());
        for block in tau.blocks() {
            let draw = self
                .field
                .extremal(&block, z, self.config.rejection_cap, rng)
                .map_err(|e| e.in_step("extremal functions"))?;
            for (p, v) in plus.iter_mut().zip(&draw.values) {
                *p = p.max(*v);
            }
            for (p, v) in at_x.iter_mut().zip(&draw.conditioning_values) {
                *p = p.max(*v);
            }
            attempts.push(draw.attempts);
        }
        let minus = self.field.poisson_max(
            z,
            &self.rows,
            &plus,
            self.envelope,
            self.config.truncation.max_atoms,
            rng,
        );
        let values = self
            .slots
            .iter()
            .map(|slot| match *slot {
                Slot::Conditioning(i) => z[i],
                Slot::Field(j) => plus[j].max(minus.values[j]),
            })
            .collect();
        Ok(ConditionalRealization {
            values,
            conditioning_values: at_x,
            partition: tau.clone(),
            atoms: minus.atoms,
            attempts,
            truncated: minus.truncated,
        })
    }

    /// All three steps.
    pub fn simulate<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<ConditionalRealization> {
        let tau = self.draw_partitions(1, rng)?.remove(0);
        self.realize(&tau, rng)
    }
}

/// One conditional realization at `s`.
pub fn conditional_simulate<R: Rng + ?Sized>(
    model: &DependenceModel,
    cond: &ConditioningSet,
    s: &SiteSet,
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<ConditionalRealization> {
    ConditionalSimulator::new(model, cond, s, config)?.simulate(rng)
}

/// `P(Z(s) <= a | Z(x) = z)`.
///
/// The sub-extremal part contributes `exp{-V(z, a) + V(z)}` with `V` the
/// exponent measure, and each extremal function the ratio of two
/// rectangle probabilities of its conditional law. Scenarios are
/// enumerated, so `k` is limited to the exact regime.
pub fn conditional_cdf(
    model: &DependenceModel,
    cond: &ConditioningSet,
    s: &SiteSet,
    a: &[f64],
    config: &SimulationConfig,
) -> Result<f64> {
    if a.len() != s.len() {
        return Err(Error::Dimension(format!(
            "{} thresholds for {} targets",
            a.len(),
            s.len()
        )));
    }
    if a.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("thresholds must not be NaN".into()));
    }
    let k = cond.len();
    if k > MAX_EXACT_K {
        return Err(Error::Capacity(format!(
            "the conditional distribution function supports k <= {MAX_EXACT_K}, got {k}"
        )));
    }
    if a.iter().any(|&v| v <= 0.0) {
        return Ok(0.0);
    }
    // targets at conditioning sites are known; unbounded thresholds drop out
    let (slots, _) = split_targets(&cond.x, s)?;
    let mut keep = Vec::new();
    for (j, slot) in slots.iter().enumerate() {
        match *slot {
            Slot::Conditioning(i) => {
                if a[j] < cond.z[i] {
                    return Ok(0.0);
                }
            }
            Slot::Field(_) => {
                if a[j].is_finite() {
                    keep.push(j);
                }
            }
        }
    }
    if keep.is_empty() {
        return Ok(1.0);
    }
    let s = s.subset(&keep);
    let a: Vec<f64> = keep.iter().map(|&j| a[j]).collect();
    let m = s.len();
    let latent = LatentCovariance::new(model, &cond.x.concat(&s)?)?;
    let qmc = &config.qmc;
    let mut rng = stream(derive_seed(config.seed, CDF_STREAM), 0);

    let x_idx: Vec<usize> = (0..k).collect();
    let s_idx: Vec<usize> = (k..k + m).collect();
    let all_idx: Vec<usize> = (0..k + m).collect();
    let za: Vec<f64> = cond.z.iter().chain(&a).copied().collect();
    let v_x = exponent_measure(&latent, &x_idx, &cond.z, qmc, &mut rng)?;
    let v_all = exponent_measure(&latent, &all_idx, &za, qmc, &mut rng)?;

    let mut weights = ScenarioWeights::new(
        model,
        &cond.x,
        &cond.z,
        *qmc,
        derive_seed(config.seed, WEIGHT_STREAM),
    )?;
    let dist = exact_scenario_distribution(&mut weights)?;
    let mut plus = 0.0;
    for (tau, &p) in dist.partitions.iter().zip(&dist.probs) {
        if p == 0.0 {
            continue;
        }
        let mut prod = p;
        for (block, mask) in tau.blocks().into_iter().zip(tau.block_masks()) {
            let rest: Vec<usize> = (0..k).filter(|i| !block.contains(i)).collect();
            let z_block: Vec<f64> = block.iter().map(|&i| cond.z[i]).collect();
            let targets: Vec<usize> = s_idx.iter().chain(&rest).copied().collect();
            let upper: Vec<f64> = a
                .iter()
                .chain(rest.iter().map(|&i| &cond.z[i]))
                .copied()
                .collect();
            let law = latent.conditional_law(&targets, &block, &z_block)?;
            let joint = law.prob_below(&upper, qmc, &mut rng)?.value;
            let below = weights.block(mask)?.rect.value;
            prod *= if below > 0.0 {
                (joint / below).min(1.0)
            } else {
                0.0
            };
        }
        plus += prod;
    }
    Ok(((v_x - v_all).exp() * plus).clamp(0.0, 1.0))
}

/// `V(y) = sum_i y_i^{-1} P(U_{-i} < y_{-i} | site i at y_i)` over `idx`.
fn exponent_measure<R: Rng + ?Sized>(
    latent: &LatentCovariance,
    idx: &[usize],
    y: &[f64],
    qmc: &QmcConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut v = 0.0;
    for (t, &i) in idx.iter().enumerate() {
        let others: Vec<usize> = idx.iter().copied().filter(|&j| j != i).collect();
        let p = if others.is_empty() {
            1.0
        } else {
            let upper: Vec<f64> = (0..idx.len()).filter(|&u| u != t).map(|u| y[u]).collect();
            latent
                .conditional_law(&others, &[i], &[y[t]])?
                .prob_below(&upper, qmc, rng)?
                .value
        };
        v += p / y[t];
    }
    Ok(v)
}
