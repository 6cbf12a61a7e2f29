//! Exponent-measure intensities, conditional intensity laws and scenario
//! weights for Brown-Resnick and Schlather processes.
//!
//! Everything is computed from the covariance of the underlying Gaussian
//! field at a fixed set of sites (a [`LatentCovariance`]); index slices pick
//! the sites that take part in a given computation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gaussian::{cholesky, symmetrize, CholeskyFactor};
use crate::geometry::{covariance_matrix, DependenceModel, Family, SiteSet};
use crate::partition::Partition;
use crate::rectprob::{mvn_rect_prob, mvt_rect_prob, QmcConfig, RectProbEstimate};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Covariance of the Gaussian field and, for Brown-Resnick, the drift
/// `gamma(x_i)` relative to the origin.
#[derive(Debug, Clone)]
pub struct LatentCovariance {
    family: Family,
    cov: DMatrix<f64>,
    drift: Vec<f64>,
}

impl LatentCovariance {
    pub fn new(model: &DependenceModel, sites: &SiteSet) -> Result<Self> {
        Ok(LatentCovariance {
            family: model.family,
            cov: covariance_matrix(sites, model)?,
            drift: model.site_drift(sites)?,
        })
    }

    pub fn from_parts(family: Family, cov: DMatrix<f64>, drift: Vec<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() || cov.nrows() != drift.len() {
            return Err(Error::Dimension(format!(
                "{}x{} covariance with {} drift values",
                cov.nrows(),
                cov.ncols(),
                drift.len()
            )));
        }
        Ok(LatentCovariance { family, cov, drift })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> usize {
        self.drift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drift.is_empty()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    fn sub_cov(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.cov[(rows[i], cols[j])])
    }

    fn sub_drift(&self, idx: &[usize]) -> DVector<f64> {
        DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.drift[i]))
    }

    fn check_index(&self, idx: &[usize]) -> Result<()> {
        match idx.iter().find(|&&i| i >= self.len()) {
            Some(i) => Err(Error::Dimension(format!(
                "site index {i} out of range for {} sites",
                self.len()
            ))),
            None => Ok(()),
        }
    }

    /// `log lambda_{x_idx}(z)`.
    pub fn log_intensity(&self, idx: &[usize], z: &[f64]) -> Result<f64> {
        self.check_index(idx)?;
        let z = self.values(z, idx.len())?;
        let sigma = self.sub_cov(idx, idx);
        let f = cholesky(&sigma)?;
        match self.family {
            Family::BrownResnick => {
                let g = self.sub_drift(idx);
                let b = BrBlock::new(&f, &z, &g);
                let k = idx.len() as f64;
                Ok(
                    0.5 * (1.0 - k) * LN_2PI - 0.5 * f.log_det() - 0.5 * b.alpha.ln()
                        + 0.5 * (b.beta * b.beta / b.alpha - b.y_p_y)
                        - z.iter().map(|v| v.ln()).sum::<f64>(),
                )
            }
            Family::Schlather => Ok(sch_log_intensity_factored(&f, &z)),
        }
    }

    /// Law of `U(targets)` for an extremal function that passes through `z`
    /// at `given`.
    pub fn conditional_law(
        &self,
        targets: &[usize],
        given: &[usize],
        z_given: &[f64],
    ) -> Result<ConditionalLaw> {
        self.check_index(targets)?;
        self.check_index(given)?;
        if given.is_empty() {
            return Err(Error::Dimension("conditioning set is empty".into()));
        }
        let z = self.values(z_given, given.len())?;
        let f = cholesky(&self.sub_cov(given, given))?;
        let s_gt = self.sub_cov(given, targets);
        // W = S_gg^{-1} S_gt, so K = S_tg S_gg^{-1} = W^T
        let w = f.solve_matrix(&s_gt);
        let mut schur = self.sub_cov(targets, targets) - s_gt.transpose() * &w;
        symmetrize(&mut schur);
        match self.family {
            Family::BrownResnick => {
                let g = self.sub_drift(given);
                let b = BrBlock::new(&f, &z, &g);
                let c = DVector::from_element(targets.len(), 1.0)
                    - w.transpose() * DVector::from_element(given.len(), 1.0);
                let mu = &c * (b.beta / b.alpha) + w.transpose() * &b.y - self.sub_drift(targets);
                let mut sigma = schur + &c * c.transpose() / b.alpha;
                symmetrize(&mut sigma);
                Ok(ConditionalLaw::BrownResnick(BrConditionalLaw { mu, sigma }))
            }
            Family::Schlather => {
                let a = f.quad_form(&z);
                let df = given.len() as u32 + 1;
                let mu = w.transpose() * &z;
                let scale = schur * (a / df as f64);
                Ok(ConditionalLaw::Schlather(SchConditionalLaw {
                    df,
                    mu,
                    scale,
                }))
            }
        }
    }

    /// Weight of one block: `lambda_{x_block}(z_block)` times the probability
    /// that the extremal function stays below `z` on the other sites.
    /// `z` holds a value for every site of `self`.
    pub fn block_weight<R: Rng + ?Sized>(
        &self,
        block: &[usize],
        z: &[f64],
        qmc: &QmcConfig,
        rng: &mut R,
    ) -> Result<BlockWeight> {
        if z.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} sites",
                z.len(),
                self.len()
            )));
        }
        let z_block: Vec<f64> = block.iter().map(|&i| z[i]).collect();
        let log_intensity = self.log_intensity(block, &z_block)?;
        let rest: Vec<usize> = (0..self.len()).filter(|i| !block.contains(i)).collect();
        let rect = if rest.is_empty() {
            RectProbEstimate::exact(1.0)
        } else {
            let law = self.conditional_law(&rest, block, &z_block)?;
            let upper: Vec<f64> = rest.iter().map(|&i| z[i]).collect();
            law.prob_below(&upper, qmc, rng)?
        };
        Ok(BlockWeight {
            log_weight: log_intensity + rect.value.ln(),
            log_intensity,
            rect,
        })
    }
}

impl LatentCovariance {
    /// Brown-Resnick values must be positive; Schlather values may have any
    /// sign but not all vanish.
    fn values(&self, z: &[f64], n: usize) -> Result<DVector<f64>> {
        if z.len() != n {
            return Err(Error::Dimension(format!(
                "{} values for {n} sites",
                z.len()
            )));
        }
        if let Some(v) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("values must be finite, got {v}")));
        }
        match self.family {
            Family::BrownResnick => {
                if let Some(v) = z.iter().find(|v| **v <= 0.0) {
                    return Err(Error::Domain(format!("values must be positive, got {v}")));
                }
            }
            Family::Schlather => {
                if z.iter().all(|v| *v == 0.0) {
                    return Err(Error::Domain("intensity is singular at z = 0".into()));
                }
            }
        }
        Ok(DVector::from_column_slice(z))
    }
}

/// Quantities of the Gaussian integral over the common shift `r` of a
/// Brown-Resnick extremal function through `z` at a block with
/// covariance factor `f` and drift `g`.
pub(crate) struct BrBlock {
    /// `1^T S^{-1} 1`
    pub alpha: f64,
    /// `1^T S^{-1} y - 1`
    pub beta: f64,
    /// `log z + g`
    pub y: DVector<f64>,
    /// `y^T S^{-1} y`
    pub y_p_y: f64,
}

impl BrBlock {
    pub fn new(f: &CholeskyFactor, z: &DVector<f64>, g: &DVector<f64>) -> Self {
        let n = z.len();
        let y = z.map(f64::ln) + g;
        let one = DVector::from_element(n, 1.0);
        let l_one = f.solve_lower(&one);
        let l_y = f.solve_lower(&y);
        BrBlock {
            alpha: l_one.norm_squared(),
            beta: l_one.dot(&l_y) - 1.0,
            y_p_y: l_y.norm_squared(),
            y,
        }
    }
}

fn sch_log_intensity_factored(f: &CholeskyFactor, z: &DVector<f64>) -> f64 {
    let k = z.len() as f64;
    let a = f.quad_form(z);
    -0.5 * (k - 1.0) * PI.ln() - 0.5 * f.log_det() - 0.5 * (k + 1.0) * a.ln()
        + ln_gamma(0.5 * (k + 1.0))
}

/// `Q_x`, `L_x` and `log C_x` in
/// `lambda_x(z) = C_x exp(-l^T Q_x l / 2 + L_x l - sum l)`, `l = log z`,
/// for a Brown-Resnick process.
#[derive(Debug, Clone)]
pub struct BrIntensityParts {
    pub q: DMatrix<f64>,
    pub l: DVector<f64>,
    pub log_c: f64,
}

impl BrIntensityParts {
    pub fn log_intensity(&self, z: &[f64]) -> f64 {
        let l = DVector::from_iterator(z.len(), z.iter().map(|v| v.ln()));
        self.log_c - 0.5 * (l.transpose() * &self.q * &l)[0] + self.l.dot(&l) - l.sum()
    }
}

pub fn br_intensity_parts(x: &SiteSet, model: &DependenceModel) -> Result<BrIntensityParts> {
    require(model, Family::BrownResnick)?;
    let cov = covariance_matrix(x, model)?;
    let g = DVector::from_vec(model.site_drift(x)?);
    let f = cholesky(&cov)?;
    let k = x.len();
    let p = f.inverse();
    let p_one = p.column_sum();
    let alpha = p_one.sum();
    let p_g = &p * &g;
    let c0 = p_g.sum() - 1.0;
    let mut q = &p - &p_one * p_one.transpose() / alpha;
    symmetrize(&mut q);
    let l = &p_one * (c0 / alpha) - &p_g;
    let log_c = 0.5 * (1.0 - k as f64) * LN_2PI - 0.5 * f.log_det() - 0.5 * alpha.ln()
        + 0.5 * c0 * c0 / alpha
        - 0.5 * g.dot(&p_g);
    Ok(BrIntensityParts { q, l, log_c })
}

fn require(model: &DependenceModel, family: Family) -> Result<()> {
    if model.family == family {
        Ok(())
    } else {
        Err(Error::FamilyMismatch {
            expected: family,
            found: model.family,
        })
    }
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Brown-Resnick `lambda_x(z)`.
pub fn br_intensity(x: &SiteSet, z: &[f64], model: &DependenceModel) -> Result<f64> {
    require(model, Family::BrownResnick)?;
    Ok(LatentCovariance::new(model, x)?
        .log_intensity(&all(x.len()), z)?
        .exp())
}

/// Schlather `lambda_x(z)`.
pub fn sch_intensity(x: &SiteSet, z: &[f64], model: &DependenceModel) -> Result<f64> {
    require(model, Family::Schlather)?;
    Ok(LatentCovariance::new(model, x)?
        .log_intensity(&all(x.len()), z)?
        .exp())
}

/// `log lambda_x(z)` for either family.
pub fn log_intensity(x: &SiteSet, z: &[f64], model: &DependenceModel) -> Result<f64> {
    LatentCovariance::new(model, x)?.log_intensity(&all(x.len()), z)
}

fn joint_law(
    s: &SiteSet,
    x: &SiteSet,
    z: &[f64],
    model: &DependenceModel,
) -> Result<ConditionalLaw> {
    let joint = LatentCovariance::new(model, &s.concat(x)?)?;
    let m = s.len();
    joint.conditional_law(&all(m), &(m..m + x.len()).collect::<Vec<_>>(), z)
}

/// Log-normal law of `U(s)` given an extremal function through `z` at `x`.
pub fn br_conditional_law(
    s: &SiteSet,
    x: &SiteSet,
    z: &[f64],
    model: &DependenceModel,
) -> Result<BrConditionalLaw> {
    require(model, Family::BrownResnick)?;
    match joint_law(s, x, z, model)? {
        ConditionalLaw::BrownResnick(law) => Ok(law),
        ConditionalLaw::Schlather(_) => unreachable!(),
    }
}

/// Student law of `U(s)` given an extremal function through `z` at `x`.
pub fn sch_conditional_law(
    s: &SiteSet,
    x: &SiteSet,
    z: &[f64],
    model: &DependenceModel,
) -> Result<SchConditionalLaw> {
    require(model, Family::Schlather)?;
    match joint_law(s, x, z, model)? {
        ConditionalLaw::Schlather(law) => Ok(law),
        ConditionalLaw::BrownResnick(_) => unreachable!(),
    }
}

/// Conditional law for either family.
pub fn conditional_law(
    s: &SiteSet,
    x: &SiteSet,
    z: &[f64],
    model: &DependenceModel,
) -> Result<ConditionalLaw> {
    joint_law(s, x, z, model)
}

/// `log U ~ N(mu, sigma)`.
#[derive(Debug, Clone)]
pub struct BrConditionalLaw {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl BrConditionalLaw {
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        let m = self.mu.len();
        if u.len() != m {
            return Err(Error::Dimension(format!(
                "{} values for {m} sites",
                u.len()
            )));
        }
        if u.iter().any(|&v| v <= 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let f = cholesky(&self.sigma)?;
        let lu = DVector::from_iterator(m, u.iter().map(|v| v.ln()));
        Ok(-0.5 * m as f64 * LN_2PI
            - 0.5 * f.log_det()
            - 0.5 * f.quad_form(&(&lu - &self.mu))
            - lu.sum())
    }
}

/// Multivariate Student with `df` degrees of freedom, location `mu` and
/// scale matrix `scale`.
#[derive(Debug, Clone)]
pub struct SchConditionalLaw {
    pub df: u32,
    pub mu: DVector<f64>,
    pub scale: DMatrix<f64>,
}

impl SchConditionalLaw {
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        let m = self.mu.len();
        if u.len() != m {
            return Err(Error::Dimension(format!(
                "{} values for {m} sites",
                u.len()
            )));
        }
        let f = cholesky(&self.scale)?;
        let nu = self.df as f64;
        let md = m as f64;
        let delta = f.quad_form(&(DVector::from_column_slice(u) - &self.mu));
        Ok(ln_gamma(0.5 * (nu + md))
            - ln_gamma(0.5 * nu)
            - 0.5 * md * (nu * PI).ln()
            - 0.5 * f.log_det()
            - 0.5 * (nu + md) * (delta / nu).ln_1p())
    }
}

#[derive(Debug, Clone)]
pub enum ConditionalLaw {
    BrownResnick(BrConditionalLaw),
    Schlather(SchConditionalLaw),
}

impl ConditionalLaw {
    pub fn dim(&self) -> usize {
        match self {
            ConditionalLaw::BrownResnick(l) => l.mu.len(),
            ConditionalLaw::Schlather(l) => l.mu.len(),
        }
    }

    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        match self {
            ConditionalLaw::BrownResnick(l) => l.log_density(u),
            ConditionalLaw::Schlather(l) => l.log_density(u),
        }
    }

    /// `P(lower < U < upper)`, bounds on the natural scale.
    pub fn rect_prob<R: Rng + ?Sized>(
        &self,
        lower: &[f64],
        upper: &[f64],
        qmc: &QmcConfig,
        rng: &mut R,
    ) -> Result<RectProbEstimate> {
        let m = self.dim();
        if lower.len() != m || upper.len() != m {
            return Err(Error::Dimension(format!(
                "bounds of length {} and {} for {m} sites",
                lower.len(),
                upper.len()
            )));
        }
        match self {
            ConditionalLaw::BrownResnick(l) => {
                let log = |v: &f64| if *v <= 0.0 { f64::NEG_INFINITY } else { v.ln() };
                let lo = DVector::from_iterator(m, lower.iter().map(log));
                let hi = DVector::from_iterator(m, upper.iter().map(log));
                mvn_rect_prob(&l.mu, &l.sigma, &lo, &hi, qmc, rng)
            }
            ConditionalLaw::Schlather(l) => mvt_rect_prob(
                l.df,
                &l.mu,
                &l.scale,
                &DVector::from_column_slice(lower),
                &DVector::from_column_slice(upper),
                qmc,
                rng,
            ),
        }
    }

    /// `P(U < upper)`.
    pub fn prob_below<R: Rng + ?Sized>(
        &self,
        upper: &[f64],
        qmc: &QmcConfig,
        rng: &mut R,
    ) -> Result<RectProbEstimate> {
        let lower = vec![f64::NEG_INFINITY; self.dim()];
        self.rect_prob(&lower, upper, qmc, rng)
    }
}

/// Log weight of one block of a hitting scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockWeight {
    pub log_weight: f64,
    pub log_intensity: f64,
    pub rect: RectProbEstimate,
}

/// Weight of block `label` of `partition` for conditioning values `z` at `x`.
pub fn scenario_weight<R: Rng + ?Sized>(
    model: &DependenceModel,
    x: &SiteSet,
    z: &[f64],
    partition: &Partition,
    label: u8,
    qmc: &QmcConfig,
    rng: &mut R,
) -> Result<BlockWeight> {
    if partition.len() != x.len() {
        return Err(Error::Dimension(format!(
            "partition of {} sites for {} conditioning sites",
            partition.len(),
            x.len()
        )));
    }
    let block: Vec<usize> = (0..x.len())
        .filter(|&i| partition.labels()[i] == label)
        .collect();
    if block.is_empty() {
        return Err(Error::Domain(format!("partition has no block {label}")));
    }
    LatentCovariance::new(model, x)?.block_weight(&block, z, qmc, rng)
}
