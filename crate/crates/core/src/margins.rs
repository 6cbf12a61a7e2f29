//! Marginal transforms between unit Frechet, standard Gumbel and GEV scales.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shapes closer to zero than this use the Gumbel formulas.
pub const GUMBEL_SHAPE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
}

impl GevParams {
    pub fn new(location: f64, scale: f64, shape: f64) -> Result<Self> {
        let p = GevParams {
            location,
            scale,
            shape,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn gumbel() -> Self {
        GevParams {
            location: 0.0,
            scale: 1.0,
            shape: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.location.is_finite() && self.shape.is_finite()) {
            return Err(Error::Domain(
                "GEV location and shape must be finite".into(),
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Domain(format!(
                "GEV scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

fn check_frechet(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "Frechet values must be positive and finite, got {z}"
        )))
    }
}

/// `log z`.
pub fn frechet_to_gumbel(z: f64) -> Result<f64> {
    check_frechet(z)?;
    Ok(z.ln())
}

/// `exp y`.
pub fn gumbel_to_frechet(y: f64) -> Result<f64> {
    if y.is_finite() {
        Ok(y.exp())
    } else {
        Err(Error::Domain(format!(
            "Gumbel values must be finite, got {y}"
        )))
    }
}

/// `eta + sigma (z^xi - 1) / xi`, or `eta + sigma log z` when `xi = 0`.
pub fn frechet_to_gev(z: f64, p: &GevParams) -> Result<f64> {
    check_frechet(z)?;
    p.validate()?;
    let l = z.ln();
    let t = if p.shape.abs() < GUMBEL_SHAPE_EPS {
        l
    } else {
        (p.shape * l).exp_m1() / p.shape
    };
    Ok(p.location + p.scale * t)
}

/// Inverse of [`frechet_to_gev`].
pub fn gev_to_frechet(y: f64, p: &GevParams) -> Result<f64> {
    p.validate()?;
    if !y.is_finite() {
        return Err(Error::Domain(format!("GEV values must be finite, got {y}")));
    }
    let u = (y - p.location) / p.scale;
    if p.shape.abs() < GUMBEL_SHAPE_EPS {
        return Ok(u.exp());
    }
    let t = p.shape * u;
    if t <= -1.0 {
        return Err(Error::Domain(format!(
            "{y} lies outside the support of GEV({}, {}, {})",
            p.location, p.scale, p.shape
        )));
    }
    let z = (t.ln_1p() / p.shape).exp();
    check_frechet(z)?;
    Ok(z)
}

/// `beta_0 + sum_c beta_c covariate_c`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

impl LinearTerm {
    pub fn constant(intercept: f64) -> Self {
        LinearTerm {
            intercept,
            coefficients: BTreeMap::new(),
        }
    }

    pub fn with(mut self, covariate: &str, coefficient: f64) -> Self {
        self.coefficients.insert(covariate.to_string(), coefficient);
        self
    }

    pub fn eval(&self, covariates: &HashMap<String, f64>) -> Result<f64> {
        let mut v = self.intercept;
        for (name, beta) in &self.coefficients {
            let c = covariates
                .get(name)
                .ok_or_else(|| Error::Config(format!("covariate {name:?} is missing")))?;
            v += beta * c;
        }
        Ok(v)
    }
}

/// GEV parameters as linear functions of named covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSurface {
    pub location: LinearTerm,
    pub scale: LinearTerm,
    pub shape: LinearTerm,
}

impl TrendSurface {
    /// Covariates referenced by any of the three terms.
    pub fn covariates(&self) -> Vec<&str> {
        let mut names: Vec<&str> = [&self.location, &self.scale, &self.shape]
            .iter()
            .flat_map(|t| t.coefficients.keys().map(String::as_str))
            .collect();
        names.sort_unstable();
        names.dedup();
        names
    }
}

pub fn trend_surface_eval(
    ts: &TrendSurface,
    covariates: &HashMap<String, f64>,
) -> Result<GevParams> {
    let p = GevParams {
        location: ts.location.eval(covariates)?,
        scale: ts.scale.eval(covariates)?,
        shape: ts.shape.eval(covariates)?,
    };
    p.validate()?;
    Ok(p)
}
