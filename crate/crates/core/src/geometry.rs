//! Sites, the two dependence families and their covariance matrices.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_cdf;

/// Default distance below which two sites count as the same location.
pub const DUPLICATE_EPS: f64 = 1e-8;

/// A set of sites in `R^d` with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSet {
    dim: usize,
    coords: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

impl SiteSet {
    pub fn new(coords: Vec<Vec<f64>>) -> Result<Self> {
        let dim = coords.first().map_or(0, Vec::len);
        for (i, c) in coords.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::Dimension(format!(
                    "site {i} has {} coordinates, expected {dim}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "site {i} has a non-finite coordinate"
                )));
            }
        }
        Ok(SiteSet {
            dim,
            coords,
            labels: None,
        })
    }

    pub fn with_labels(coords: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != coords.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} sites",
                labels.len(),
                coords.len()
            )));
        }
        let mut set = Self::new(coords)?;
        set.labels = Some(labels);
        Ok(set)
    }

    /// Sites on the real line.
    pub fn on_line(xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect())
    }

    /// Cell centres of an `nx` by `ny` grid over `[x0, x1] x [y0, y1]`,
    /// row-major in y then x.
    pub fn grid(nx: usize, ny: usize, x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config("grid must have at least one cell".into()));
        }
        let dx = (x.1 - x.0) / nx as f64;
        let dy = (y.1 - y.0) / ny as f64;
        let mut coords = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                coords.push(vec![
                    x.0 + (i as f64 + 0.5) * dx,
                    y.0 + (j as f64 + 0.5) * dy,
                ]);
            }
        }
        Self::new(coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coord(&self, i: usize) -> &[f64] {
        &self.coords[i]
    }

    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of site `i`, falling back to its 1-based index.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => format!("{}", i + 1),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclid(&self.coords[i], &self.coords[j])
    }

    pub fn subset(&self, idx: &[usize]) -> SiteSet {
        SiteSet {
            dim: self.dim,
            coords: idx.iter().map(|&i| self.coords[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &SiteSet) -> Result<SiteSet> {
        if !self.is_empty() && !other.is_empty() && self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "cannot join {}-d and {}-d site sets",
                self.dim, other.dim
            )));
        }
        let dim = if self.is_empty() { other.dim } else { self.dim };
        let labels = match (&self.labels, &other.labels) {
            (None, None) => None,
            _ => Some(
                (0..self.len())
                    .map(|i| self.label(i))
                    .chain((0..other.len()).map(|i| other.label(i)))
                    .collect(),
            ),
        };
        Ok(SiteSet {
            dim,
            coords: self.coords.iter().chain(&other.coords).cloned().collect(),
            labels,
        })
    }

    /// Index of the first site within `eps` of `point`.
    pub fn find(&self, point: &[f64], eps: f64) -> Option<usize> {
        self.coords.iter().position(|c| euclid(c, point) < eps)
    }

    /// First pair of sites closer than `eps`.
    pub fn first_duplicate(&self, eps: f64) -> Option<(usize, usize)> {
        for i in 0..self.len() {
            for j in 0..i {
                if self.distance(i, j) < eps {
                    return Some((j, i));
                }
            }
        }
        None
    }
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `Y = exp{W - gamma}` with `W` Gaussian, stationary increments.
    BrownResnick,
    /// `Y = sqrt(2 pi) eps` with `eps` a standard Gaussian field.
    Schlather,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::BrownResnick => f.write_str("Brown-Resnick"),
            Family::Schlather => f.write_str("Schlather"),
        }
    }
}

/// A dependence family with a power (Brown-Resnick) or powered exponential
/// (Schlather) structure, both parameterized by `range > 0` and
/// `0 < smooth <= 2`.
///
/// Brown-Resnick covariances are built relative to `origin` (the point where
/// `W` vanishes), which defaults to the coordinate origin. The max-stable
/// law does not depend on it, but no site may coincide with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceModel {
    pub family: Family,
    pub range: f64,
    pub smooth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
}

impl DependenceModel {
    pub fn new(family: Family, range: f64, smooth: f64) -> Result<Self> {
        let model = DependenceModel {
            family,
            range,
            smooth,
            origin: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn brown_resnick(range: f64, smooth: f64) -> Result<Self> {
        Self::new(Family::BrownResnick, range, smooth)
    }

    pub fn schlather(range: f64, smooth: f64) -> Result<Self> {
        Self::new(Family::Schlather, range, smooth)
    }

    pub fn with_origin(mut self, origin: Vec<f64>) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::Domain(format!(
                "range must be positive, got {}",
                self.range
            )));
        }
        if !(self.smooth > 0.0 && self.smooth <= 2.0) {
            return Err(Error::Domain(format!(
                "smoothness must lie in (0, 2], got {}",
                self.smooth
            )));
        }
        if let Some(o) = &self.origin {
            if o.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("origin must be finite".into()));
            }
        }
        Ok(())
    }

    fn require(&self, family: Family) -> Result<()> {
        if self.family == family {
            Ok(())
        } else {
            Err(Error::FamilyMismatch {
                expected: family,
                found: self.family,
            })
        }
    }

    fn check_lag(h: f64) -> Result<()> {
        if h >= 0.0 && h.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "lag must be finite and nonnegative, got {h}"
            )))
        }
    }

    /// `gamma(h) = (h / range)^smooth` (Brown-Resnick only).
    pub fn semivariogram(&self, h: f64) -> Result<f64> {
        self.require(Family::BrownResnick)?;
        Self::check_lag(h)?;
        Ok(self.power(h))
    }

    /// `rho(h) = exp{-(h / range)^smooth}` (Schlather only).
    pub fn correlation(&self, h: f64) -> Result<f64> {
        self.require(Family::Schlather)?;
        Self::check_lag(h)?;
        Ok((-self.power(h)).exp())
    }

    #[inline]
    pub(crate) fn power(&self, h: f64) -> f64 {
        (h / self.range).powf(self.smooth)
    }

    /// Pairwise extremal coefficient at lag `h`, in `[1, 2]`.
    pub fn extremal_coefficient(&self, h: f64) -> Result<f64> {
        Self::check_lag(h)?;
        let theta = match self.family {
            Family::BrownResnick => 2.0 * norm_cdf((0.5 * self.power(h)).sqrt()),
            Family::Schlather => {
                let rho = (-self.power(h)).exp();
                1.0 + (0.5 * (1.0 - rho)).sqrt()
            }
        };
        Ok(theta.clamp(1.0, 2.0))
    }

    /// Brown-Resnick origin for `dim`-dimensional sites.
    pub fn origin_for(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.origin {
            Some(o) if o.len() == dim => Ok(o.clone()),
            Some(o) => Err(Error::Dimension(format!(
                "origin has {} coordinates, sites have {dim}",
                o.len()
            ))),
            None => Ok(vec![0.0; dim]),
        }
    }

    /// Semivariogram of every site relative to the origin; zeros for Schlather.
    pub(crate) fn site_drift(&self, sites: &SiteSet) -> Result<Vec<f64>> {
        match self.family {
            Family::Schlather => Ok(vec![0.0; sites.len()]),
            Family::BrownResnick => {
                let o = self.origin_for(sites.dim())?;
                Ok(sites
                    .coords()
                    .iter()
                    .map(|c| self.power(euclid(c, &o)))
                    .collect())
            }
        }
    }
}

/// Covariance of the Gaussian field behind `model` at `sites`.
///
/// Brown-Resnick: `Cov{W(x_i), W(x_j)} = gamma(x_i) + gamma(x_j) - gamma(x_i - x_j)`
/// with `gamma(x)` measured from the model origin. Schlather: `rho(|x_i - x_j|)`.
pub fn covariance_matrix(sites: &SiteSet, model: &DependenceModel) -> Result<DMatrix<f64>> {
    covariance_matrix_eps(sites, model, DUPLICATE_EPS)
}

/// As [`covariance_matrix`] with an explicit duplicate-site tolerance.
pub fn covariance_matrix_eps(
    sites: &SiteSet,
    model: &DependenceModel,
    eps: f64,
) -> Result<DMatrix<f64>> {
    model.validate()?;
    if let Some((i, j)) = sites.first_duplicate(eps) {
        return Err(Error::SingularCovariance(format!(
            "sites {} and {} coincide (distance < {eps:e})",
            sites.label(i),
            sites.label(j)
        )));
    }
    let n = sites.len();
    let mut cov = DMatrix::zeros(n, n);
    match model.family {
        Family::Schlather => {
            for j in 0..n {
                cov[(j, j)] = 1.0;
                for i in 0..j {
                    let c = (-model.power(sites.distance(i, j))).exp();
                    cov[(i, j)] = c;
                    cov[(j, i)] = c;
                }
            }
        }
        Family::BrownResnick => {
            let drift = model.site_drift(sites)?;
            let o = model.origin_for(sites.dim())?;
            if let Some(i) = sites.find(&o, eps) {
                return Err(Error::SingularCovariance(format!(
                    "site {} coincides with the Brown-Resnick origin",
                    sites.label(i)
                )));
            }
            for j in 0..n {
                cov[(j, j)] = 2.0 * drift[j];
                for i in 0..j {
                    let c = drift[i] + drift[j] - model.power(sites.distance(i, j));
                    cov[(i, j)] = c;
                    cov[(j, i)] = c;
                }
            }
        }
    }
    Ok(cov)
}
