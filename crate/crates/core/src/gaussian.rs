//! Dense Cholesky factors, Gaussian sampling and Schur-complement conditioning.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Diagonal loading applied when a caller opts into regularization.
pub const RIDGE: f64 = 1e-10;

/// Lower-triangular `L` with `S = L L^T`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
}

/// Factors a symmetric positive definite matrix.
pub fn cholesky(s: &DMatrix<f64>) -> Result<CholeskyFactor> {
    cholesky_ridged(s, 0.0)
}

/// As [`cholesky`], after adding `ridge` to the diagonal. Only meant to be
/// reached through an explicit configuration switch.
pub fn cholesky_ridged(s: &DMatrix<f64>, ridge: f64) -> Result<CholeskyFactor> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::Dimension(format!(
            "{}x{} matrix is not square",
            n,
            s.ncols()
        )));
    }
    let scale = s.amax();
    for j in 0..n {
        for i in 0..j {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-10 * scale.max(1.0) {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut m = s.clone();
    if ridge > 0.0 {
        for i in 0..n {
            m[(i, i)] += ridge;
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    let chol = nalgebra::linalg::Cholesky::new(m).ok_or_else(|| {
        Error::SingularCovariance(format!("{n}x{n} matrix is not positive definite"))
    })?;
    let lower = chol.unpack();
    let tol = (n.max(1) as f64) * f64::EPSILON;
    for (i, &d) in diag.iter().enumerate() {
        let pivot = lower[(i, i)];
        if !(pivot > 0.0) || pivot * pivot <= tol * d {
            return Err(Error::SingularCovariance(format!(
                "pivot {i} of a {n}x{n} matrix is numerically zero"
            )));
        }
    }
    Ok(CholeskyFactor { lower })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("factor has a positive diagonal")
    }

    /// `S^{-1} b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.solve_lower(b);
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("factor has a positive diagonal")
    }

    /// `S^{-1} B`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("factor has a positive diagonal");
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.solve_matrix(&DMatrix::identity(self.dim(), self.dim()));
        symmetrize(&mut inv);
        inv
    }

    /// `x^T S^{-1} x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        self.solve_lower(x).norm_squared()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }
}

/// `mean + L xi` with `xi` i.i.d. standard normal drawn from `rng`.
pub fn gaussian_sample<R: Rng + ?Sized>(
    factor: &CholeskyFactor,
    mean: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    assert_eq!(
        factor.dim(),
        mean.len(),
        "mean and factor dimensions differ"
    );
    let xi = standard_normal_vector(factor.dim(), rng);
    mean + factor.lower() * xi
}

pub(crate) fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Conditional mean and covariance of the leading block of a Gaussian
/// vector with covariance `s`, given that its trailing `k` coordinates equal `z`.
///
/// Returns `(S_sx S_x^{-1} z, S_s - S_sx S_x^{-1} S_xs)`.
pub fn schur_conditional(
    s: &DMatrix<f64>,
    k: usize,
    z: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = s.nrows();
    if s.ncols() != n || k > n || z.len() != k {
        return Err(Error::Dimension(format!(
            "cannot condition a {n}x{} matrix on {k} coordinates with {} values",
            s.ncols(),
            z.len()
        )));
    }
    let m = n - k;
    let s_ss = s.view((0, 0), (m, m)).into_owned();
    if k == 0 {
        return Ok((DVector::zeros(m), s_ss));
    }
    let s_sx = s.view((0, m), (m, k)).into_owned();
    let s_xx = s.view((m, m), (k, k)).into_owned();
    let fx = cholesky(&s_xx)?;
    // W = S_x^{-1} S_xs, so S_sx S_x^{-1} = W^T.
    let w = fx.solve_matrix(&s_sx.transpose());
    let mean = w.transpose() * z;
    let mut cov = s_ss - &s_sx * &w;
    symmetrize(&mut cov);
    Ok((mean, cov))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn factor_examples() {
        let id = cholesky(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(id.lower(), &DMatrix::<f64>::identity(3, 3));

        let f = cholesky(&DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0])).unwrap();
        let l = f.lower();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((f.log_det() - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let s = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(cholesky(&s), Err(Error::SingularCovariance(_))));
        // the ridge switch rescues it
        assert!(cholesky_ridged(&s, 1e-10).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(cholesky(&asym).is_err());
    }

    #[test]
    fn empty_sample() {
        let f = cholesky(&DMatrix::zeros(0, 0)).unwrap();
        let v = gaussian_sample(&f, &DVector::zeros(0), &mut stream(1, 0));
        assert_eq!(v.len(), 0);
    }

    #[test]
    fn sample_moments() {
        let n = 100_000;
        let mut rng = stream(11, 0);
        let id = cholesky(&DMatrix::identity(3, 3)).unwrap();
        let mut mean = DVector::zeros(3);
        for _ in 0..n {
            mean += gaussian_sample(&id, &DVector::zeros(3), &mut rng);
        }
        mean /= n as f64;
        assert!(mean.amax() < 0.02, "{mean}");

        let s = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let f = cholesky(&s).unwrap();
        let mut acc = DMatrix::zeros(2, 2);
        let mut sum = DVector::zeros(2);
        for _ in 0..n {
            let v = gaussian_sample(&f, &DVector::zeros(2), &mut rng);
            acc += &v * v.transpose();
            sum += v;
        }
        let m = sum / n as f64;
        let cov = acc / n as f64 - &m * m.transpose();
        assert!((cov - s).amax() < 0.1);
    }

    #[test]
    fn schur_examples() {
        let rho = 0.6;
        let s = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let (m, c) = schur_conditional(&s, 1, &DVector::from_element(1, 2.0)).unwrap();
        assert!((m[0] - 2.0 * rho).abs() < 1e-15);
        assert!((c[(0, 0)] - (1.0 - rho * rho)).abs() < 1e-15);

        let mut block = DMatrix::identity(3, 3);
        block[(0, 1)] = 0.3;
        block[(1, 0)] = 0.3;
        let (m, c) = schur_conditional(&block, 1, &DVector::from_element(1, 5.0)).unwrap();
        assert_eq!(m, DVector::zeros(2));
        assert_eq!(c, block.view((0, 0), (2, 2)).into_owned());

        let (m, _) = schur_conditional(&s, 1, &DVector::zeros(1)).unwrap();
        assert_eq!(m[0], 0.0);
        assert!(matches!(
            schur_conditional(&DMatrix::from_element(3, 3, 1.0), 2, &DVector::zeros(2)),
            Err(Error::SingularCovariance(_))
        ));
    }

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed, 99);
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    proptest! {
        #[test]
        fn cholesky_round_trip(n in 1usize..12, seed in 0u64..1000) {
            let s = random_spd(n, seed);
            let f = cholesky(&s).unwrap();
            let err = (f.reconstruct() - &s).amax();
            prop_assert!(err <= 1e-10 * s.amax());
            prop_assert!(f.lower().diagonal().iter().all(|&d| d > 0.0));
        }

        #[test]
        fn schur_is_linear_in_z(n in 2usize..8, seed in 0u64..1000, k in 1usize..4) {
            let k = k.min(n - 1);
            let s = random_spd(n, seed);
            let z = DVector::from_fn(k, |i, _| 1.0 + i as f64);
            let (m1, c1) = schur_conditional(&s, k, &z).unwrap();
            let (m2, c2) = schur_conditional(&s, k, &(&z * 2.0)).unwrap();
            prop_assert!((m2 - m1 * 2.0).amax() < 1e-9);
            prop_assert!((&c1 - &c2).amax() == 0.0);
            prop_assert!((&c1 - c1.transpose()).amax() == 0.0);
        }
    }
}
