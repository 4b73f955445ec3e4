//! Multivariate normal class prototypes.
//!
//! A [`ClassGaussian`] keeps only the mean and the lower Cholesky factor of
//! its covariance. Quadratic forms go through triangular solves, so neither
//! `Σ` nor `Σ⁻¹` is formed when scoring a sample.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::math::{exp, LN_2PI};
use crate::matrix::FeatureMatrix;

/// Largest tolerated asymmetry of a covariance passed to [`make_gaussian`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Jitter added to the point-estimate covariance when none is configured.
pub const DEFAULT_JITTER: f64 = 1e-4;

/// One class's multivariate normal.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGaussian {
    class_id: u32,
    learned_in_session: u32,
    mean: Vec<f64>,
    chol_lower: Vec<f64>,
    log_det_cov: f64,
}

impl ClassGaussian {
    /// Builds from a mean and a lower-triangular factor with positive
    /// diagonal. Entries above the diagonal are ignored and zeroed.
    pub fn from_cholesky(mean: Vec<f64>, mut chol_lower: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if chol_lower.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: chol_lower.len(),
            });
        }
        if let Some(col) = mean.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row: 0, col });
        }
        for i in 0..d {
            for j in (i + 1)..d {
                chol_lower[i * d + j] = 0.0;
            }
            let v = chol_lower[i * d + i];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: v });
            }
        }
        if let Some(pos) = chol_lower.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row: pos / d, col: pos % d });
        }
        let log_det_cov = linalg::log_det_from_cholesky(&chol_lower, d);
        Ok(Self {
            class_id: 0,
            learned_in_session: 0,
            mean,
            chol_lower,
            log_det_cov,
        })
    }

    /// Sets the class id and the session the class was learned in.
    pub fn with_identity(mut self, class_id: u32, learned_in_session: u32) -> Self {
        self.class_id = class_id;
        self.learned_in_session = learned_in_session;
        self
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn learned_in_session(&self) -> u32 {
        self.learned_in_session
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major lower Cholesky factor.
    pub fn chol_lower(&self) -> &[f64] {
        &self.chol_lower
    }

    pub fn log_det_cov(&self) -> f64 {
        self.log_det_cov
    }

    /// `L Lᵀ`, for reporting and tests.
    pub fn covariance(&self) -> Vec<f64> {
        linalg::lower_gram(&self.chol_lower, self.dim())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    /// `(x - μ)ᵀ Σ⁻¹ (x - μ)`.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        let mut r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        linalg::solve_lower_in_place(&self.chol_lower, self.dim(), &mut r);
        Ok(r.iter().map(|v| v * v).sum())
    }

    /// `exp(-½ (x - μ)ᵀ Σ⁻¹ (x - μ))`, in `(0, 1]`.
    pub fn similarity(&self, x: &[f64]) -> Result<f64> {
        Ok(exp(-0.5 * self.mahalanobis_sq(x)?))
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        let m = self.mahalanobis_sq(x)?;
        Ok(-0.5 * (self.dim() as f64 * LN_2PI + self.log_det_cov + m))
    }

    /// `KL(self ‖ N(0, I))`.
    pub fn kl_to_standard_normal(&self) -> f64 {
        let d = self.dim() as f64;
        let trace = linalg::frobenius_sq(&self.chol_lower);
        let mu_sq: f64 = self.mean.iter().map(|v| v * v).sum();
        // Clamp round-off; the divergence is non-negative.
        (0.5 * (trace + mu_sq - d - self.log_det_cov)).max(0.0)
    }

    /// `count` draws `μ + L z`, `z ~ N(0, I)`, from a seeded ChaCha8 stream.
    pub fn sample(&self, count: usize, seed: u64) -> FeatureMatrix {
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(count * d);
        let mut z = alloc::vec![0.0; d];
        for _ in 0..count {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            for i in 0..d {
                let row = &self.chol_lower[i * d..i * d + i + 1];
                let s: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                data.push(self.mean[i] + s);
            }
        }
        let label = i32::try_from(self.class_id).unwrap_or(i32::MAX);
        FeatureMatrix::new(d, data, alloc::vec![label; count]).expect("finite samples")
    }
}

/// Factorizes `covariance` (row-major, `d × d`) into a [`ClassGaussian`].
///
/// Inputs within [`SYMMETRY_TOLERANCE`] of symmetric are symmetrized first.
pub fn make_gaussian(mean: &[f64], covariance: &[f64]) -> Result<ClassGaussian> {
    let d = mean.len();
    if d == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    if covariance.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: covariance.len(),
        });
    }
    let (sym, asym) = linalg::symmetrize(covariance, d);
    let scale = covariance.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if !(asym <= SYMMETRY_TOLERANCE * scale) {
        return Err(Error::NotPositiveDefinite {
            pivot: 0,
            value: f64::NAN,
        });
    }
    let l = linalg::cholesky(&sym, d)?;
    ClassGaussian::from_cholesky(mean.to_vec(), l)
}

/// Bhattacharyya distance between two Gaussians.
pub fn bhattacharyya(g1: &ClassGaussian, g2: &ClassGaussian) -> Result<f64> {
    let d = g1.dim();
    g1.check_dim(g2.dim())?;
    let s1 = g1.covariance();
    let s2 = g2.covariance();
    let avg: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| 0.5 * (a + b)).collect();
    let l = linalg::cholesky(&avg, d)?;
    let mut diff: Vec<f64> = g2.mean.iter().zip(&g1.mean).map(|(a, b)| a - b).collect();
    linalg::solve_lower_in_place(&l, d, &mut diff);
    let quad: f64 = diff.iter().map(|v| v * v).sum();
    let log_det_avg = linalg::log_det_from_cholesky(&l, d);
    let value = quad / 8.0 + 0.5 * (log_det_avg - 0.5 * (g1.log_det_cov + g2.log_det_cov));
    Ok(value.max(0.0))
}

/// Sample mean and population covariance (`1/N`) plus `jitter · I`.
pub fn point_estimate(class_data: &FeatureMatrix, jitter: f64) -> Result<ClassGaussian> {
    if class_data.is_empty() {
        return Err(Error::EmptyClass);
    }
    let d = class_data.dim();
    let n = class_data.rows() as f64;
    let mean = class_data.column_means();
    let mut cov = alloc::vec![0.0; d * d];
    let mut centered = alloc::vec![0.0; d];
    for r in class_data.iter_rows() {
        for (c, (x, m)) in centered.iter_mut().zip(r.iter().zip(&mean)) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in 0..=i {
                cov[i * d + j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[i * d + j] / n;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
        cov[i * d + i] += jitter;
    }
    let l = linalg::cholesky(&cov, d)?;
    ClassGaussian::from_cholesky(mean, l)
}

/// Class mean with identity covariance: the Euclidean nearest-class-mean
/// baseline.
pub fn class_mean_estimate(class_data: &FeatureMatrix) -> Result<ClassGaussian> {
    if class_data.is_empty() {
        return Err(Error::EmptyClass);
    }
    let d = class_data.dim();
    let mut l = alloc::vec![0.0; d * d];
    for j in 0..d {
        l[j * d + j] = 1.0;
    }
    ClassGaussian::from_cholesky(class_data.column_means(), l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn diag(values: &[f64]) -> Vec<f64> {
        let d = values.len();
        let mut m = vec![0.0; d * d];
        for (i, v) in values.iter().enumerate() {
            m[i * d + i] = *v;
        }
        m
    }

    #[test]
    fn identity_gaussian() {
        let g = make_gaussian(&[0.0, 0.0], &diag(&[1.0, 1.0])).unwrap();
        assert_eq!(g.chol_lower(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.log_det_cov(), 0.0);
    }

    #[test]
    fn one_dimensional_factor() {
        let g = make_gaussian(&[0.0], &[4.0]).unwrap();
        assert_eq!(g.chol_lower(), &[2.0]);
        assert!((g.log_det_cov() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn indefinite_covariance_fails() {
        let err = make_gaussian(&[0.0, 0.0], &[1.0, 2.0, 2.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        let err = make_gaussian(&[0.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn tiny_asymmetry_is_absorbed() {
        let g = make_gaussian(&[0.0, 0.0], &[2.0, 0.5 + 1e-12, 0.5, 1.0]).unwrap();
        let c = g.covariance();
        assert!((c[1] - c[2]).abs() < 1e-15);
        assert!(make_gaussian(&[0.0, 0.0], &[2.0, 0.6, 0.5, 1.0]).is_err());
    }

    #[test]
    fn mahalanobis_examples() {
        let g = make_gaussian(&[1.0, 1.0], &diag(&[1.0, 1.0])).unwrap();
        assert_eq!(g.mahalanobis_sq(&[4.0, 5.0]).unwrap(), 25.0);
        assert_eq!(g.mahalanobis_sq(&[1.0, 1.0]).unwrap(), 0.0);
        let g = make_gaussian(&[0.0, 0.0], &diag(&[4.0, 1.0])).unwrap();
        assert!((g.mahalanobis_sq(&[2.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            g.mahalanobis_sq(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        );
    }

    #[test]
    fn similarity_examples() {
        let g = make_gaussian(&[0.0, 0.0], &diag(&[1.0, 1.0])).unwrap();
        assert_eq!(g.similarity(&[0.0, 0.0]).unwrap(), 1.0);
        // mahalanobis_sq = 2
        assert!((g.similarity(&[1.0, 1.0]).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((g.similarity(&[3.0, 4.0]).unwrap() - (-12.5f64).exp()).abs() < 1e-18);
        assert!((g.similarity(&[3.0, 4.0]).unwrap() - 3.73e-6).abs() < 1e-8);
    }

    #[test]
    fn log_pdf_examples() {
        let ln2pi = (2.0 * core::f64::consts::PI).ln();
        let g = make_gaussian(&[0.0], &[1.0]).unwrap();
        assert!((g.log_pdf(&[0.0]).unwrap() + 0.5 * ln2pi).abs() < 1e-15);
        assert!((g.log_pdf(&[0.0]).unwrap() + 0.9189).abs() < 1e-4);
        let g = make_gaussian(&[3.0, -1.0], &diag(&[1.0, 1.0])).unwrap();
        assert!((g.log_pdf(&[3.0, -1.0]).unwrap() + ln2pi).abs() < 1e-15);
        let g = make_gaussian(&[2.0], &[4.0]).unwrap();
        let want = -0.5 * (ln2pi + 4f64.ln());
        assert!((g.log_pdf(&[2.0]).unwrap() - want).abs() < 1e-15);
        assert!((want + 1.6121).abs() < 1e-4);
    }

    #[test]
    fn kl_examples() {
        for d in 1..6 {
            let g = make_gaussian(&vec![0.0; d], &diag(&vec![1.0; d])).unwrap();
            assert_eq!(g.kl_to_standard_normal(), 0.0);
        }
        let g = make_gaussian(&[1.0], &[1.0]).unwrap();
        assert!((g.kl_to_standard_normal() - 0.5).abs() < 1e-15);
        let g = make_gaussian(&[0.0, 0.0], &diag(&[2.0, 2.0])).unwrap();
        assert!((g.kl_to_standard_normal() - (1.0 - 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn bhattacharyya_examples() {
        let a = make_gaussian(&[0.0], &[1.0]).unwrap();
        let b = make_gaussian(&[0.0], &[4.0]).unwrap();
        let c = make_gaussian(&[2.0], &[1.0]).unwrap();
        assert_eq!(bhattacharyya(&a, &a).unwrap(), 0.0);
        assert!((bhattacharyya(&a, &b).unwrap() - 0.5 * (2.5f64 / 2.0).ln()).abs() < 1e-12);
        assert!((bhattacharyya(&a, &c).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sample_contracts() {
        let g = make_gaussian(&[1.0, -2.0], &diag(&[1e-12, 1e-12])).unwrap();
        assert_eq!(g.sample(0, 1).rows(), 0);
        assert_eq!(g.sample(0, 1).dim(), 2);
        let s = g.sample(3, 7);
        for r in s.iter_rows() {
            assert!((r[0] - 1.0).abs() < 1e-5 && (r[1] + 2.0).abs() < 1e-5);
        }
        assert_eq!(g.sample(5, 42), g.sample(5, 42));
        assert_ne!(g.sample(5, 42), g.sample(5, 43));
    }

    #[test]
    fn point_estimate_examples() {
        let data = FeatureMatrix::from_rows(2, &[[0.0, 0.0], [2.0, 0.0]], 0).unwrap();
        let g = point_estimate(&data, 1e-4).unwrap();
        assert_eq!(g.mean(), &[1.0, 0.0]);
        let c = g.covariance();
        assert!((c[0] - 1.0001).abs() < 1e-12 && c[1].abs() < 1e-15 && (c[3] - 1e-4).abs() < 1e-15);

        let one = FeatureMatrix::from_rows(2, &[[3.0, 4.0]], 0).unwrap();
        let g = point_estimate(&one, 1e-4).unwrap();
        assert_eq!(g.mean(), &[3.0, 4.0]);
        assert!((g.covariance()[0] - 1e-4).abs() < 1e-18);
        assert!(matches!(point_estimate(&one, 0.0), Err(Error::NotPositiveDefinite { .. })));
        assert_eq!(point_estimate(&FeatureMatrix::empty(2), 1e-4), Err(Error::EmptyClass));
    }
}
