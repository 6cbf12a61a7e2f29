//! Spectral functions on a joint site set: Poisson atoms for the
//! sub-extremal process and exact draws of extremal functions.
//!
//! Sites are ordered conditioning sites first, then targets, and share one
//! Cholesky factor `L`. Target values given the conditioning block are
//! completed as `L_sx L_xx^{-1} W_x + L_ss xi_s`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky, cholesky_ridged, symmetrize, RIDGE};
use crate::geometry::{covariance_matrix, DependenceModel, Family, SiteSet};
use crate::intensity::{BrBlock, LatentCovariance};
use crate::rectprob::QmcConfig;
use crate::rng::stream;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
const FIRST_BATCH: usize = 8;
const MAX_BATCH: usize = 256;

/// Outcome of a truncated Poisson maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonMax {
    pub values: Vec<f64>,
    /// Atoms examined before the stopping rule fired.
    pub atoms: usize,
    /// The atom cap was reached before the stopping rule fired.
    pub truncated: bool,
}

/// One extremal function through `z` on its block.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalDraw {
    /// Values at the target sites.
    pub values: Vec<f64>,
    /// Values at the conditioning sites: exactly `z` on the block, below
    /// `z` elsewhere.
    pub conditioning_values: Vec<f64>,
    pub attempts: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct SpectralField {
    family: Family,
    k: usize,
    lower: DMatrix<f64>,
    cov: DMatrix<f64>,
    drift: Vec<f64>,
}

impl SpectralField {
    /// `x` first, then `s`.
    pub fn new(model: &DependenceModel, x: &SiteSet, s: &SiteSet, ridge: bool) -> Result<Self> {
        let all = if x.is_empty() {
            s.clone()
        } else {
            x.concat(s)?
        };
        let cov = covariance_matrix(&all, model)?;
        let factor = if ridge {
            cholesky_ridged(&cov, RIDGE)?
        } else {
            cholesky(&cov)?
        };
        Ok(SpectralField {
            family: model.family,
            k: x.len(),
            lower: factor.lower().clone(),
            cov,
            drift: model.site_drift(&all)?,
        })
    }

    pub fn m(&self) -> usize {
        self.drift.len() - self.k
    }

    fn n(&self) -> usize {
        self.drift.len()
    }

    /// High-probability bound on `sup Y` over the rows in `watched`.
    pub fn envelope(&self, watched: &[usize], q_br: f64, q_sch: f64) -> f64 {
        match self.family {
            Family::BrownResnick => (q_br
                * watched
                    .iter()
                    .map(|&i| self.cov[(i, i)].sqrt())
                    .fold(0.0, f64::max))
            .exp(),
            Family::Schlather => SQRT_2PI * q_sch,
        }
    }

    #[inline]
    fn spectral(&self, w: f64, i: usize) -> f64 {
        match self.family {
            Family::BrownResnick => (w - self.drift[i]).exp(),
            Family::Schlather => SQRT_2PI * w,
        }
    }

    /// `max_i zeta_i Y_i` at the `watched` rows, over atoms with
    /// `zeta_i Y_i(x) < z` on the conditioning rows.
    ///
    /// Atoms come in decreasing order of `zeta`; the loop stops once
    /// `zeta M` falls below the smallest `max(value, floor)` over the
    /// watched rows, or after `max_atoms` atoms.
    pub fn poisson_max<R: Rng + ?Sized>(
        &self,
        z: &[f64],
        watched: &[usize],
        floor: &[f64],
        envelope: f64,
        max_atoms: usize,
        rng: &mut R,
    ) -> PoissonMax {
        let (k, m, n) = (self.k, self.m(), self.n());
        debug_assert_eq!(z.len(), k);
        debug_assert_eq!(floor.len(), watched.len());
        let mut values = vec![0.0; watched.len()];
        if watched.is_empty() {
            return PoissonMax {
                values,
                atoms: 0,
                truncated: false,
            };
        }
        let threshold = |v: &[f64]| {
            v.iter()
                .zip(floor)
                .map(|(a, b)| a.max(*b))
                .fold(f64::INFINITY, f64::min)
        };
        let mut thresh = threshold(&values);
        let l_xx = self.lower.view((0, 0), (k, k));
        let l_s = self.lower.view((k, 0), (m, n));
        let mut gamma = 0.0;
        let mut atoms = 0;
        let mut batch = FIRST_BATCH;
        loop {
            let b = batch.min(max_atoms - atoms);
            if b == 0 {
                return PoissonMax {
                    values,
                    atoms,
                    truncated: true,
                };
            }
            let zetas: Vec<f64> = (0..b)
                .map(|_| {
                    gamma += rng.sample::<f64, _>(Exp1);
                    1.0 / gamma
                })
                .collect();
            let xi = DMatrix::from_fn(n, b, |_, _| rng.sample::<f64, _>(StandardNormal));
            let wx = l_xx * xi.rows(0, k);
            let keep: Vec<usize> = (0..b)
                .filter(|&c| (0..k).all(|i| zetas[c] * self.spectral(wx[(i, c)], i) < z[i]))
                .collect();
            // rejected atoms never need their target rows
            let ws = if keep.is_empty() || m == 0 {
                DMatrix::zeros(m, keep.len())
            } else {
                l_s * xi.select_columns(&keep)
            };
            let mut next = 0;
            for (c, &zeta) in zetas.iter().enumerate() {
                if zeta * envelope <= thresh {
                    return PoissonMax {
                        values,
                        atoms,
                        truncated: false,
                    };
                }
                atoms += 1;
                if keep.get(next) == Some(&c) {
                    for (v, &row) in values.iter_mut().zip(watched) {
                        let w = if row < k {
                            wx[(row, c)]
                        } else {
                            ws[(row - k, next)]
                        };
                        *v = v.max(zeta * self.spectral(w, row));
                    }
                    thresh = threshold(&values);
                    next += 1;
                }
            }
            batch = (2 * batch).min(MAX_BATCH);
        }
    }

    fn sub_cov(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.cov[(rows[i], cols[j])])
    }

    /// Draws the extremal function through `z` at the conditioning sites in
    /// `block`, conditioned to stay below `z` on the other conditioning
    /// sites, by rejection on the conditioning sites only.
    pub fn extremal<R: Rng + ?Sized>(
        &self,
        block: &[usize],
        z: &[f64],
        cap: u64,
        rng: &mut R,
    ) -> Result<ExtremalDraw> {
        let k = self.k;
        debug_assert_eq!(z.len(), k);
        if block.is_empty() || block.iter().any(|&i| i >= k) {
            return Err(Error::Domain(format!(
                "invalid block {block:?} of {k} sites"
            )));
        }
        let rest: Vec<usize> = (0..k).filter(|i| !block.contains(i)).collect();
        let z_block = DVector::from_iterator(block.len(), block.iter().map(|&i| z[i]));
        let f_block = cholesky(&self.sub_cov(block, block))?;
        // regression of the complement on the block, and its residual factor
        let s_bc = self.sub_cov(block, &rest);
        let w = f_block.solve_matrix(&s_bc);
        let resid = if rest.is_empty() {
            None
        } else {
            let mut schur = self.sub_cov(&rest, &rest) - s_bc.transpose() * &w;
            symmetrize(&mut schur);
            Some(cholesky(&schur)?)
        };
        let latent = match self.family {
            Family::BrownResnick => {
                let g = DVector::from_iterator(block.len(), block.iter().map(|&i| self.drift[i]));
                Latent::Br(BrBlock::new(&f_block, &z_block, &g))
            }
            Family::Schlather => Latent::Sch {
                a: f_block.quad_form(&z_block),
                chi: ChiSquared::new(block.len() as f64 + 1.0).expect("positive df"),
            },
        };

        let mut attempts = 0u64;
        let (shift, w_block, w_rest) = loop {
            if attempts >= cap {
                return Err(self.rejection_failure(block, &rest, z, attempts));
            }
            attempts += 1;
            // (shift, latent values on the block); shift is r for
            // Brown-Resnick and the amplitude A for Schlather
            let (shift, w_block) = match &latent {
                Latent::Br(b) => {
                    let r =
                        b.beta / b.alpha + rng.sample::<f64, _>(StandardNormal) / b.alpha.sqrt();
                    (r, b.y.add_scalar(-r))
                }
                Latent::Sch { a, chi } => {
                    let amp = (a / rng.sample(*chi)).sqrt();
                    (amp, &z_block / amp)
                }
            };
            let Some(resid) = &resid else {
                break (shift, w_block, DVector::zeros(0));
            };
            let xi = DVector::from_fn(rest.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let w_rest = w.transpose() * &w_block + resid.lower() * xi;
            let ok = rest
                .iter()
                .enumerate()
                .all(|(t, &i)| self.apply(shift, w_rest[t], i) < z[i]);
            if ok {
                break (shift, w_block, w_rest);
            }
        };

        let mut wx = DVector::zeros(k);
        let mut conditioning_values = vec![0.0; k];
        for (t, &i) in block.iter().enumerate() {
            wx[i] = w_block[t];
            conditioning_values[i] = z[i];
        }
        for (t, &i) in rest.iter().enumerate() {
            wx[i] = w_rest[t];
            conditioning_values[i] = self.apply(shift, w_rest[t], i);
        }
        let m = self.m();
        let values = if m == 0 {
            Vec::new()
        } else {
            let xi_x = self
                .lower
                .view((0, 0), (k, k))
                .solve_lower_triangular(&wx)
                .expect("positive diagonal");
            let xi_s = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let ws =
                self.lower.view((k, 0), (m, k)) * xi_x + self.lower.view((k, k), (m, m)) * xi_s;
            (0..m).map(|j| self.apply(shift, ws[j], k + j)).collect()
        };
        Ok(ExtremalDraw {
            values,
            conditioning_values,
            attempts,
        })
    }

    #[inline]
    fn apply(&self, shift: f64, w: f64, i: usize) -> f64 {
        match self.family {
            Family::BrownResnick => (shift + w - self.drift[i]).exp(),
            Family::Schlather => shift * w,
        }
    }

    fn rejection_failure(
        &self,
        block: &[usize],
        rest: &[usize],
        z: &[f64],
        attempts: u64,
    ) -> Error {
        let idx: Vec<usize> = (0..self.k).collect();
        let latent = LatentCovariance::from_parts(
            self.family,
            self.sub_cov(&idx, &idx),
            self.drift[..self.k].to_vec(),
        );
        let z_block: Vec<f64> = block.iter().map(|&i| z[i]).collect();
        let upper: Vec<f64> = rest.iter().map(|&i| z[i]).collect();
        let rect_prob = latent
            .and_then(|l| l.conditional_law(rest, block, &z_block))
            .and_then(|law| law.prob_below(&upper, &QmcConfig::default(), &mut stream(0, 0)))
            .map_or(f64::NAN, |r| r.value);
        Error::RejectionFailure {
            attempts,
            accepted: 0,
            rate: 0.0,
            rect_prob,
        }
    }
}

enum Latent {
    Br(BrBlock),
    Sch { a: f64, chi: ChiSquared<f64> },
}
