//! Sample summaries shared by the command line tools and the tests.

use crate::error::{Error, Result};

/// Empirical quantile of sorted data with the midpoint rule: the `i`-th
/// order statistic sits at probability `(i - 1/2) / n`, with linear
/// interpolation between and the extremes held constant outside.
pub fn quantile(sorted: &[f64], p: f64) -> Result<f64> {
    let n = sorted.len();
    if n == 0 {
        return Err(Error::Domain("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    let h = n as f64 * p + 0.5;
    if h <= 1.0 {
        return Ok(sorted[0]);
    }
    if h >= n as f64 {
        return Ok(sorted[n - 1]);
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]))
}

/// Quantiles at each of `probs`, sorting a copy of `values`.
pub fn quantiles(values: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("sample contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    probs.iter().map(|&p| quantile(&sorted, p)).collect()
}

/// Extremal coefficient of a pair from joint draws with unit Frechet
/// margins, by the F-madogram: with `nu = E|F(Z_1) - F(Z_2)| / 2`,
/// `theta = (1 + 2 nu) / (1 - 2 nu)`.
pub fn madogram_extremal_coefficient(z1: &[f64], z2: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() || z1.is_empty() {
        return Err(Error::Dimension(format!(
            "need two samples of equal nonzero length, got {} and {}",
            z1.len(),
            z2.len()
        )));
    }
    let cdf = |z: f64| if z > 0.0 { (-1.0 / z).exp() } else { 0.0 };
    let nu = z1
        .iter()
        .zip(z2)
        .map(|(a, b)| (cdf(*a) - cdf(*b)).abs())
        .sum::<f64>()
        / (2.0 * z1.len() as f64);
    Ok(((1.0 + 2.0 * nu) / (1.0 - 2.0 * nu)).clamp(1.0, 2.0))
}
