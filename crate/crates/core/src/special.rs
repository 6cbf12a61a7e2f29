//! Scalar normal-distribution helpers.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
    }
}

/// Standard normal quantile.
#[inline]
pub fn norm_inv(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * erfc_inv(2.0 * p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_and_quantile_are_inverse() {
        for &p in &[1e-12, 1e-6, 0.025, 0.3, 0.5, 0.9, 0.975, 1.0 - 1e-9] {
            let x = norm_inv(p);
            assert!((norm_cdf(x) - p).abs() <= 1e-9 * p, "p = {p}");
        }
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_inv(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn handles_infinities() {
        assert_eq!(norm_cdf(f64::INFINITY), 1.0);
        assert_eq!(norm_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(norm_pdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(norm_inv(0.0), f64::NEG_INFINITY);
    }
}
