//! Rectangle probabilities of multivariate normal and Student laws.
//!
//! The integrand is the separation-of-variables transform of the
//! rectangle onto the unit cube, after a greedy variable reordering that
//! integrates the narrowest conditional interval first. It is averaged
//! over a randomly shifted Richtmyer lattice with a baker's transform and
//! antithetic points; the spread of the shift means gives the error bar.
//! Student probabilities add one radial chi variable to the cube.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_inv, norm_pdf};

/// Quasi-Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QmcConfig {
    /// Lattice points per random shift (each used with its antithetic twin).
    pub n_points: usize,
    /// Independent random shifts.
    pub n_shifts: usize,
    /// Largest cube dimension accepted.
    pub max_dim: usize,
}

impl Default for QmcConfig {
    fn default() -> Self {
        QmcConfig {
            n_points: 1024,
            n_shifts: 12,
            max_dim: 100,
        }
    }
}

/// A probability with its Monte Carlo standard error. `n_samples == 0`
/// marks a closed-form value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectProbEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl RectProbEstimate {
    pub fn exact(value: f64) -> Self {
        RectProbEstimate {
            value: value.clamp(0.0, 1.0),
            std_error: 0.0,
            n_samples: 0,
        }
    }
}

/// `P(lower < X < upper)` for `X ~ N(mean, cov)`.
pub fn mvn_rect_prob<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    config: &QmcConfig,
    rng: &mut R,
) -> Result<RectProbEstimate> {
    let Some((a, b)) = centred_bounds(mean, cov, lower, upper)? else {
        return Ok(RectProbEstimate::exact(0.0));
    };
    let d = a.len();
    match d {
        0 => return Ok(RectProbEstimate::exact(1.0)),
        1 => {
            let sd = cov[(0, 0)].sqrt();
            if !(sd > 0.0) {
                return Err(Error::SingularCovariance("zero variance".into()));
            }
            return Ok(RectProbEstimate::exact(interval_prob(a[0] / sd, b[0] / sd)));
        }
        _ => {}
    }
    let plan = Plan::new(cov, a, b)?;
    check_dim(d - 1, config)?;
    Ok(integrate(d - 1, config, rng, |w| plan.integrand(w, 1.0)))
}

/// `P(lower < X < upper)` for `X` multivariate Student with `df` degrees of
/// freedom, location `loc` and scale matrix `scale`.
pub fn mvt_rect_prob<R: Rng + ?Sized>(
    df: u32,
    loc: &DVector<f64>,
    scale: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    config: &QmcConfig,
    rng: &mut R,
) -> Result<RectProbEstimate> {
    if df == 0 {
        return Err(Error::Domain(
            "degrees of freedom must be at least 1".into(),
        ));
    }
    let Some((a, b)) = centred_bounds(loc, scale, lower, upper)? else {
        return Ok(RectProbEstimate::exact(0.0));
    };
    let d = a.len();
    match d {
        0 => return Ok(RectProbEstimate::exact(1.0)),
        1 => {
            let sd = scale[(0, 0)].sqrt();
            if !(sd > 0.0) {
                return Err(Error::SingularCovariance("zero scale".into()));
            }
            let t = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
            let (lo, hi) = (a[0] / sd, b[0] / sd);
            // upper-tail arithmetic keeps precision for intervals far right
            let p = if lo > 0.0 {
                t.sf(lo) - t.sf(hi)
            } else {
                t.cdf(hi) - t.cdf(lo)
            };
            return Ok(RectProbEstimate::exact(p));
        }
        _ => {}
    }
    let plan = Plan::new(scale, a, b)?;
    check_dim(d, config)?;
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    let nu = df as f64;
    Ok(integrate(d, config, rng, |w| {
        let p = w[0].clamp(1e-15, 1.0 - 1e-15);
        let r = (chi.inverse_cdf(p) / nu).sqrt();
        plan.integrand(&w[1..], r)
    }))
}

fn check_dim(dim: usize, config: &QmcConfig) -> Result<()> {
    if dim > config.max_dim {
        Err(Error::Capacity(format!(
            "integration dimension {dim} exceeds max_dim = {}",
            config.max_dim
        )))
    } else {
        Ok(())
    }
}

/// Validates shapes and returns the bounds relative to the centre, or `None`
/// when some interval is empty.
fn centred_bounds(
    centre: &DVector<f64>,
    cov: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let d = centre.len();
    if cov.nrows() != d || cov.ncols() != d || lower.len() != d || upper.len() != d {
        return Err(Error::Dimension(format!(
            "rectangle of dimension {d} with {}x{} matrix and bounds of length {}/{}",
            cov.nrows(),
            cov.ncols(),
            lower.len(),
            upper.len()
        )));
    }
    let mut a = Vec::with_capacity(d);
    let mut b = Vec::with_capacity(d);
    for i in 0..d {
        let (lo, hi) = (lower[i], upper[i]);
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Domain(format!(
                "invalid interval ({lo}, {hi}) at coordinate {i}"
            )));
        }
        if lo == hi {
            return Ok(None);
        }
        a.push(lo - centre[i]);
        b.push(hi - centre[i]);
    }
    Ok(Some((a, b)))
}

/// `Phi(b) - Phi(a)` evaluated on the side of zero that keeps precision.
#[inline]
fn interval_prob(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (norm_cdf(-a) - norm_cdf(-b)).max(0.0)
    } else {
        (norm_cdf(b) - norm_cdf(a)).max(0.0)
    }
}

/// Probability of `(a, b)` under N(0,1) and the point at relative position
/// `w` of that interval in probability scale.
#[inline]
fn truncated_step(a: f64, b: f64, w: f64) -> (f64, f64) {
    if a > 0.0 {
        let (qa, qb) = (norm_cdf(-a), norm_cdf(-b));
        let p = (qa - qb).max(0.0);
        (p, -norm_inv(qa - w * p))
    } else {
        let (pa, pb) = (norm_cdf(a), norm_cdf(b));
        let p = (pb - pa).max(0.0);
        (p, norm_inv(pa + w * p))
    }
}

/// Reordered Cholesky factor and bounds.
struct Plan {
    d: usize,
    chol: DMatrix<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Plan {
    fn new(cov: &DMatrix<f64>, mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Self> {
        let d = a.len();
        let mut sigma = cov.clone();
        let mut chol = DMatrix::<f64>::zeros(d, d);
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut best = (f64::INFINITY, i);
            for j in i..d {
                let mut s = 0.0;
                let mut ss = 0.0;
                for l in 0..i {
                    s += chol[(j, l)] * y[l];
                    ss += chol[(j, l)] * chol[(j, l)];
                }
                let var = sigma[(j, j)] - ss;
                if !(var > 1e-14 * sigma[(j, j)].abs()) {
                    return Err(Error::SingularCovariance(
                        "rectangle covariance is not positive definite".into(),
                    ));
                }
                let den = var.sqrt();
                let p = interval_prob((a[j] - s) / den, (b[j] - s) / den);
                if p < best.0 {
                    best = (p, j);
                }
            }
            let j = best.1;
            if j != i {
                sigma.swap_rows(i, j);
                sigma.swap_columns(i, j);
                chol.swap_rows(i, j);
                a.swap(i, j);
                b.swap(i, j);
            }
            let ss: f64 = (0..i).map(|l| chol[(i, l)] * chol[(i, l)]).sum();
            let lii = (sigma[(i, i)] - ss).sqrt();
            chol[(i, i)] = lii;
            for r in (i + 1)..d {
                let dot: f64 = (0..i).map(|l| chol[(r, l)] * chol[(i, l)]).sum();
                chol[(r, i)] = (sigma[(r, i)] - dot) / lii;
            }
            let s: f64 = (0..i).map(|l| chol[(i, l)] * y[l]).sum();
            let (lo, hi) = ((a[i] - s) / lii, (b[i] - s) / lii);
            let p = interval_prob(lo, hi);
            y[i] = if p > 1e-300 {
                (norm_pdf(lo) - norm_pdf(hi)) / p
            } else if lo.is_finite() {
                lo
            } else {
                hi
            };
            if !y[i].is_finite() {
                y[i] = 0.0;
            }
        }
        Ok(Plan { d, chol, a, b })
    }

    /// Integrand at cube point `w` (length `d - 1`), with bounds scaled by `r`.
    fn integrand(&self, w: &[f64], r: f64) -> f64 {
        let d = self.d;
        let mut y = [0.0f64; 128];
        let mut heap;
        let y: &mut [f64] = if d <= y.len() {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut f = 1.0;
        for i in 0..d {
            let row = self.chol.row(i);
            let mut s = 0.0;
            for l in 0..i {
                s += row[l] * y[l];
            }
            let lii = row[i];
            let lo = (self.a[i] * r - s) / lii;
            let hi = (self.b[i] * r - s) / lii;
            if i + 1 < d {
                let (p, yi) = truncated_step(lo, hi, w[i]);
                f *= p;
                if f == 0.0 {
                    return 0.0;
                }
                y[i] = yi;
            } else {
                f *= interval_prob(lo, hi);
            }
        }
        f
    }
}

fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// Randomized QMC average of `f` over `[0,1)^dim`.
fn integrate<R, F>(dim: usize, config: &QmcConfig, rng: &mut R, f: F) -> RectProbEstimate
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let n_shifts = config.n_shifts.max(2);
    let n_points = config.n_points.max(1);
    let gen: Vec<f64> = primes(dim)
        .iter()
        .map(|&p| (p as f64).sqrt().fract())
        .collect();
    let mut x = vec![0.0; dim];
    let mut anti = vec![0.0; dim];
    let mut means = Vec::with_capacity(n_shifts);
    for _ in 0..n_shifts {
        let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let mut acc = 0.0;
        for j in 1..=n_points {
            for i in 0..dim {
                let t = (j as f64 * gen[i] + shift[i]).fract();
                let t = (2.0 * t - 1.0).abs();
                x[i] = t;
                anti[i] = 1.0 - t;
            }
            acc += 0.5 * (f(&x) + f(&anti));
        }
        means.push(acc / n_points as f64);
    }
    let r = n_shifts as f64;
    let mean = means.iter().sum::<f64>() / r;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (r - 1.0);
    RectProbEstimate {
        value: mean.clamp(0.0, 1.0),
        std_error: (var / r).sqrt(),
        n_samples: 2 * n_points * n_shifts,
    }
}
