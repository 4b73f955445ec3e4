//! Variational fitting of one Gaussian per class.
//!
//! The objective for a class with `N` samples is the per-datum ELBO
//!
//! ```text
//! elbo = (1/|B|) Σ_{x∈B} ln N(x; μ, Σ) − kl_scale · KL(N(μ, Σ) ‖ N(0, I))
//! ```
//!
//! with `Σ = L Lᵀ`. The diagonal of `L` is stored unconstrained and mapped
//! through softplus, so every iterate is positive definite. Each step moves
//! the parameters by `learning_rate · N · ∇elbo`, i.e. plain gradient ascent
//! on the full-data ELBO `Σ_x ln p(x) − KL` when `kl_scale = 1/N`.
//!
//! Fitting starts from `N(0, I)` and may stop early once the log-determinant
//! of the covariance reaches the average determinant of previously learned
//! classes (see [`det_ratio`]).

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{FitConfig, KlWeight};
use crate::error::{Error, Result};
use crate::gaussian::ClassGaussian;
use crate::linalg;
use crate::math::{ln, logsumexp, sigmoid, softplus, softplus_inv, LN_2PI};
use crate::matrix::FeatureMatrix;
use crate::store::ModelStore;

/// Consecutive small ELBO changes that count as a plateau.
pub const PLATEAU_WINDOW: usize = 10;

/// Free parameters of the variational Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    mean: Vec<f64>,
    /// Row-major lower triangle; diagonal entries are pre-softplus.
    chol_raw: Vec<f64>,
}

impl VariationalParams {
    /// `μ = 0`, `L = I`.
    pub fn standard(dim: usize) -> Self {
        let mut chol_raw = alloc::vec![0.0; dim * dim];
        let raw_one = softplus_inv(1.0);
        for j in 0..dim {
            chol_raw[j * dim + j] = raw_one;
        }
        Self {
            mean: alloc::vec![0.0; dim],
            chol_raw,
        }
    }

    pub fn new(mean: Vec<f64>, chol_raw: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if chol_raw.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: chol_raw.len(),
            });
        }
        Ok(Self { mean, chol_raw })
    }

    /// Parameters that reproduce `g` exactly up to the softplus round trip.
    pub fn from_gaussian(g: &ClassGaussian) -> Self {
        let d = g.dim();
        let mut chol_raw = g.chol_lower().to_vec();
        for j in 0..d {
            chol_raw[j * d + j] = softplus_inv(chol_raw[j * d + j]);
        }
        Self {
            mean: g.mean().to_vec(),
            chol_raw,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn chol_raw(&self) -> &[f64] {
        &self.chol_raw
    }

    /// The implied lower Cholesky factor.
    pub fn chol_lower(&self) -> Vec<f64> {
        let d = self.dim();
        let mut l = alloc::vec![0.0; d * d];
        for i in 0..d {
            for j in 0..i {
                l[i * d + j] = self.chol_raw[i * d + j];
            }
            l[i * d + i] = softplus(self.chol_raw[i * d + i]);
        }
        l
    }

    pub fn log_det_cov(&self) -> f64 {
        let d = self.dim();
        2.0 * (0..d).map(|j| ln(softplus(self.chol_raw[j * d + j]))).sum::<f64>()
    }

    pub fn to_gaussian(&self) -> Result<ClassGaussian> {
        ClassGaussian::from_cholesky(self.mean.clone(), self.chol_lower())
    }

    fn ascend(&mut self, grad: &ElboGradient, step: f64) {
        for (p, g) in self.mean.iter_mut().zip(&grad.mean) {
            *p += step * g;
        }
        for (p, g) in self.chol_raw.iter_mut().zip(&grad.chol_raw) {
            *p += step * g;
        }
    }

    fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.chol_raw).all(|v| v.is_finite())
    }
}

/// Gradient of the ELBO with respect to `(mean, chol_raw)`; the upper
/// triangle of `chol_raw` is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    pub mean: Vec<f64>,
    pub chol_raw: Vec<f64>,
}

impl ElboGradient {
    pub fn norm(&self) -> f64 {
        crate::math::sqrt(self.mean.iter().chain(&self.chol_raw).map(|v| v * v).sum())
    }
}

/// Batch mean and scatter about it (divided by the batch size).
#[derive(Debug, Clone)]
struct BatchStats {
    mean: Vec<f64>,
    scatter: Vec<f64>,
}

impl BatchStats {
    fn from_rows<'a, I>(rows: I, d: usize) -> Result<Self>
    where
        I: Iterator<Item = &'a [f64]> + Clone,
    {
        let mut mean = alloc::vec![0.0; d];
        let mut n = 0usize;
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let nf = n as f64;
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut scatter = alloc::vec![0.0; d * d];
        let mut c = alloc::vec![0.0; d];
        for r in rows {
            for (ci, (x, m)) in c.iter_mut().zip(r.iter().zip(&mean)) {
                *ci = x - m;
            }
            for i in 0..d {
                for j in 0..=i {
                    scatter[i * d + j] += c[i] * c[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v = scatter[i * d + j] / nf;
                scatter[i * d + j] = v;
                scatter[j * d + i] = v;
            }
        }
        Ok(Self { mean, scatter })
    }

    fn from_matrix(m: &FeatureMatrix) -> Result<Self> {
        Self::from_rows(m.iter_rows(), m.dim())
    }
}

fn evaluate(
    params: &VariationalParams,
    stats: &BatchStats,
    kl_scale: f64,
    with_gradient: bool,
) -> (f64, Option<ElboGradient>) {
    let d = params.dim();
    let l = params.chol_lower();
    let m = linalg::lower_inverse(&l, d);
    let delta: Vec<f64> = stats.mean.iter().zip(&params.mean).map(|(a, b)| a - b).collect();
    let mut s = stats.scatter.clone();
    for i in 0..d {
        for j in 0..d {
            s[i * d + j] += delta[i] * delta[j];
        }
    }
    // Whitened scatter L⁻¹ S L⁻ᵀ.
    let a = linalg::congruence_lower(&m, &s, d);
    let trace_a: f64 = (0..d).map(|j| a[j * d + j]).sum();
    let log_det = linalg::log_det_from_cholesky(&l, d);
    let mu_sq: f64 = params.mean.iter().map(|v| v * v).sum();
    let kl = 0.5 * (linalg::frobenius_sq(&l) + mu_sq - d as f64 - log_det);
    let value = -0.5 * (d as f64 * LN_2PI + log_det + trace_a) - kl_scale * kl;
    if !with_gradient {
        return (value, None);
    }

    // ∂/∂μ = Σ⁻¹ δ − kl_scale μ, with Σ⁻¹ = Mᵀ M.
    let mut w = delta;
    linalg::solve_lower_in_place(&l, d, &mut w);
    linalg::solve_lower_transpose_in_place(&l, d, &mut w);
    let grad_mean: Vec<f64> = w
        .iter()
        .zip(&params.mean)
        .map(|(g, mu)| g - kl_scale * mu)
        .collect();

    // ∂/∂L = lower(Mᵀ (A − I)) − kl_scale · lower(L − Mᵀ).
    let mut grad_l = alloc::vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut g = 0.0;
            for k in i..d {
                let a_kj = a[k * d + j] - if k == j { 1.0 } else { 0.0 };
                g += m[k * d + i] * a_kj;
            }
            let mt_ij = if i == j { m[i * d + i] } else { 0.0 };
            grad_l[i * d + j] = g - kl_scale * (l[i * d + j] - mt_ij);
        }
    }
    for j in 0..d {
        grad_l[j * d + j] *= sigmoid(params.chol_raw[j * d + j]);
    }
    (
        value,
        Some(ElboGradient {
            mean: grad_mean,
            chol_raw: grad_l,
        }),
    )
}

fn check_batch(params: &VariationalParams, batch: &FeatureMatrix) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: batch.dim(),
        });
    }
    Ok(())
}

/// Per-datum ELBO of `batch` under `params`.
pub fn elbo(params: &VariationalParams, batch: &FeatureMatrix, kl_scale: f64) -> Result<f64> {
    check_batch(params, batch)?;
    let stats = BatchStats::from_matrix(batch)?;
    Ok(evaluate(params, &stats, kl_scale, false).0)
}

/// Analytic gradient of [`elbo`].
pub fn elbo_gradient(
    params: &VariationalParams,
    batch: &FeatureMatrix,
    kl_scale: f64,
) -> Result<ElboGradient> {
    check_batch(params, batch)?;
    let stats = BatchStats::from_matrix(batch)?;
    Ok(evaluate(params, &stats, kl_scale, true).1.expect("gradient requested"))
}

/// Log ratio of a candidate determinant to the mean reference determinant,
/// `ln[k·det Σ / Σ_i det Σ_i]`, evaluated in log space.
pub fn det_ratio(candidate_log_det: f64, reference_log_dets: &[f64]) -> Result<f64> {
    if reference_log_dets.is_empty() {
        return Err(Error::EmptyReferenceSet);
    }
    let log_mean = logsumexp(reference_log_dets) - ln(reference_log_dets.len() as f64);
    Ok(candidate_log_det - log_mean)
}

/// Squared [`det_ratio`]: the determinant-alignment penalty. Diagnostic only.
pub fn det_regularizer(candidate_log_det: f64, reference_log_dets: &[f64]) -> Result<f64> {
    let r = det_ratio(candidate_log_det, reference_log_dets)?;
    Ok(r * r)
}

/// Why a fit ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    Plateau,
    MaxSteps,
}

/// State after one update step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub elbo: f64,
    pub log_det_cov: f64,
    /// Determinant ratio against the reference set, when there is one.
    pub ratio: Option<f64>,
}

/// Optimization history of one class fit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitTrace {
    pub initial_elbo: f64,
    pub initial_log_det_cov: f64,
    pub initial_ratio: Option<f64>,
    pub records: Vec<StepRecord>,
    pub stop_reason: StopReason,
}

impl FitTrace {
    pub fn final_elbo(&self) -> f64 {
        self.records.last().map_or(self.initial_elbo, |r| r.elbo)
    }

    /// Log-determinant after every step, starting with the initial value.
    pub fn log_det_series(&self) -> Vec<f64> {
        core::iter::once(self.initial_log_det_cov)
            .chain(self.records.iter().map(|r| r.log_det_cov))
            .collect()
    }
}

/// Side from which the determinant ratio approaches the reference average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Approach {
    /// Covariance starts smaller than the references and grows.
    FromBelow,
    /// Covariance starts larger than the references and shrinks.
    FromAbove,
}

impl Approach {
    fn from_initial(ratio: f64, epsilon: f64) -> Self {
        if ratio > epsilon {
            Approach::FromAbove
        } else {
            Approach::FromBelow
        }
    }

    fn reached(self, ratio: f64, epsilon: f64) -> bool {
        match self {
            Approach::FromBelow => ratio >= -epsilon,
            Approach::FromAbove => ratio <= epsilon,
        }
    }
}

/// Minibatch source: full batch, or seeded reshuffled epochs.
struct Batches<'a> {
    data: &'a FeatureMatrix,
    full: Option<BatchStats>,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl<'a> Batches<'a> {
    fn new(data: &'a FeatureMatrix, batch_size: usize, seed: u64) -> Result<Self> {
        let n = data.rows();
        let full = if batch_size == 0 || batch_size >= n {
            Some(BatchStats::from_matrix(data)?)
        } else {
            None
        };
        Ok(Self {
            data,
            full,
            batch_size,
            order: (0..n).collect(),
            cursor: n,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn next(&mut self) -> Result<BatchStats> {
        if let Some(full) = &self.full {
            return Ok(full.clone());
        }
        if self.cursor + self.batch_size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let idx = &self.order[self.cursor..self.cursor + self.batch_size];
        self.cursor += self.batch_size;
        let data = self.data;
        BatchStats::from_rows(idx.iter().map(|&i| data.row(i)), data.dim())
    }
}

/// Fits one class distribution starting from `N(0, I)`.
///
/// With early stopping enabled and a non-empty reference set, the fit ends at
/// the first step whose determinant ratio reaches the band `[-ε, ε]` from the
/// side it started on: `R ≥ -ε` when the initial ratio is at most `ε`,
/// `R ≤ ε` when it starts above. Otherwise it ends on an ELBO plateau or
/// after `max_steps`.
pub fn fit_class(
    class_data: &FeatureMatrix,
    reference_log_dets: &[f64],
    config: &FitConfig,
) -> Result<(ClassGaussian, FitTrace)> {
    config.validate()?;
    if class_data.is_empty() {
        return Err(Error::EmptyClass);
    }
    let d = class_data.dim();
    let n = class_data.rows() as f64;
    let kl_scale = match config.kl_weight {
        KlWeight::PerDatum => 1.0 / n,
        KlWeight::Fixed(w) => w,
    };
    let step_size = config.learning_rate * n;
    let has_refs = !reference_log_dets.is_empty();
    let ratio_of = |log_det: f64| -> Option<f64> {
        has_refs.then(|| det_ratio(log_det, reference_log_dets).expect("non-empty references"))
    };

    let mut params = VariationalParams::standard(d);
    let mut batches = Batches::new(class_data, config.batch_size, config.seed)?;
    let (initial_elbo, grad) = evaluate(&params, &batches.next()?, kl_scale, true);
    let mut grad = grad.expect("gradient requested");
    let initial_log_det_cov = params.log_det_cov();
    let initial_ratio = ratio_of(initial_log_det_cov);
    let approach = initial_ratio.map(|r| Approach::from_initial(r, config.epsilon));

    let mut records = Vec::with_capacity(config.max_steps.min(4096));
    let mut prev_elbo = initial_elbo;
    let mut flat_steps = 0usize;
    let mut stop_reason = StopReason::MaxSteps;
    for step in 1..=config.max_steps {
        params.ascend(&grad, step_size);
        if !params.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let (value, g) = evaluate(&params, &batches.next()?, kl_scale, true);
        let log_det_cov = params.log_det_cov();
        if !value.is_finite() || !log_det_cov.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        grad = g.expect("gradient requested");
        let ratio = ratio_of(log_det_cov);
        records.push(StepRecord {
            step,
            elbo: value,
            log_det_cov,
            ratio,
        });

        if config.early_stop_enabled {
            if let (Some(r), Some(side)) = (ratio, approach) {
                if side.reached(r, config.epsilon) {
                    stop_reason = StopReason::EarlyStop;
                    break;
                }
            }
        }
        if (value - prev_elbo).abs() < config.plateau_tol {
            flat_steps += 1;
            if flat_steps >= PLATEAU_WINDOW {
                stop_reason = StopReason::Plateau;
                break;
            }
        } else {
            flat_steps = 0;
        }
        prev_elbo = value;
    }

    let gaussian = params.to_gaussian().map_err(|_| Error::NonFiniteLoss {
        step: records.len(),
    })?;
    Ok((
        gaussian,
        FitTrace {
            initial_elbo,
            initial_log_det_cov,
            initial_ratio,
            records,
            stop_reason,
        },
    ))
}

/// Fits every labeled class of `data` in ascending id order.
///
/// References for each class are the log-determinants already in `existing`
/// plus those fitted earlier in this call. Classes already present in
/// `existing` are skipped unless `refit_existing` is set.
pub fn fit_all_classes(
    data: &FeatureMatrix,
    existing: &ModelStore,
    config: &FitConfig,
    session: u32,
    refit_existing: bool,
) -> Result<Vec<(ClassGaussian, FitTrace)>> {
    if data.labels().iter().any(|&l| l < 0) {
        return Err(Error::MissingLabels("every sample must carry a class label"));
    }
    let mut fitted: Vec<(ClassGaussian, FitTrace)> = Vec::new();
    for label in data.distinct_labels() {
        let id = label as u32;
        if existing.get(id).is_some() && !refit_existing {
            continue;
        }
        let refs: Vec<f64> = existing
            .classes()
            .filter(|g| g.class_id() != id)
            .map(|g| g.log_det_cov())
            .chain(fitted.iter().map(|(g, _)| g.log_det_cov()))
            .collect();
        let mut cfg = config.clone();
        cfg.seed = config.seed ^ (u64::from(id) + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
        let (g, trace) = fit_class(&data.rows_with_label(label), &refs, &cfg)?;
        fitted.push((g.with_identity(id, session), trace));
    }
    Ok(fitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn one_d(points: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(1, points.to_vec(), vec![0; points.len()]).unwrap()
    }

    #[test]
    fn elbo_examples() {
        let p = VariationalParams::standard(1);
        assert!((elbo(&p, &one_d(&[0.0]), 123.0).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        let p = VariationalParams::new(vec![1.0], vec![softplus_inv(1.0)]).unwrap();
        let v = elbo(&p, &one_d(&[1.0]), 1.0).unwrap();
        assert!((v + 1.418_938_533_204_672_7).abs() < 1e-12);
        let twice = elbo(&p, &one_d(&[1.0, 1.0]), 1.0).unwrap();
        assert!((twice - v).abs() < 1e-15);
    }

    #[test]
    fn elbo_errors() {
        let p = VariationalParams::standard(2);
        assert_eq!(elbo(&p, &FeatureMatrix::empty(2), 1.0), Err(Error::EmptyBatch));
        assert!(matches!(
            elbo(&p, &one_d(&[1.0]), 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stationary_reconstruction_has_zero_mean_gradient() {
        let p = VariationalParams::new(vec![0.7, -0.2], {
            let r = softplus_inv(1.0);
            vec![r, 0.0, 0.0, r]
        })
        .unwrap();
        let batch = FeatureMatrix::from_rows(2, &[[0.7, -0.2]], 0).unwrap();
        let g = elbo_gradient(&p, &batch, 0.0).unwrap();
        assert!(g.mean.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn det_ratio_examples() {
        assert_eq!(det_ratio(0.0, &[0.0, 0.0]).unwrap(), 0.0);
        let r = det_ratio(2f64.ln(), &[1f64.ln(), 3f64.ln()]).unwrap();
        assert!(r.abs() < 1e-15);
        let r = det_ratio(4f64.ln(), &[2f64.ln(), 2f64.ln()]).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-15);
        assert_eq!(det_ratio(0.0, &[]), Err(Error::EmptyReferenceSet));
    }

    #[test]
    fn det_regularizer_examples() {
        assert_eq!(det_regularizer(0.0, &[0.0]).unwrap(), 0.0);
        let v = det_regularizer(4f64.ln(), &[2f64.ln()]).unwrap();
        assert!((v - 2f64.ln().powi(2)).abs() < 1e-15 && (v - 0.4805).abs() < 1e-4);
        let v = det_regularizer(-0.1, &[0.0]).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
        assert_eq!(det_regularizer(0.0, &[]), Err(Error::EmptyReferenceSet));
    }

    #[test]
    fn fit_runs_exactly_max_steps_without_early_stop() {
        let cfg = FitConfig {
            early_stop_enabled: false,
            max_steps: 3,
            plateau_tol: 0.0,
            ..FitConfig::default()
        };
        let (_, trace) = fit_class(&one_d(&[0.5, 1.5, 2.5]), &[0.0], &cfg).unwrap();
        assert_eq!(trace.records.len(), 3);
        assert_eq!(trace.stop_reason, StopReason::MaxSteps);
        assert!(trace.records.iter().all(|r| r.ratio.is_some()));
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            fit_class(&FeatureMatrix::empty(1), &[], &FitConfig::default()).map(|_| ()),
            Err(Error::EmptyClass)
        );
        let cfg = FitConfig {
            learning_rate: 1e6,
            early_stop_enabled: false,
            ..FitConfig::default()
        };
        let far = one_d(&[1e3, -1e3, 5e2]);
        assert!(matches!(
            fit_class(&far, &[], &cfg),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn shrinking_fit_stops_from_above() {
        // Tight data: the covariance shrinks from I towards the reference.
        let pts: Vec<f64> = (0..40).map(|i| 0.05 * ((i % 7) as f64 - 3.0)).collect();
        let cfg = FitConfig {
            learning_rate: 1e-3,
            max_steps: 2000,
            ..FitConfig::default()
        };
        let refs = [(0.1f64).ln()];
        let (g, trace) = fit_class(&one_d(&pts), &refs, &cfg).unwrap();
        assert_eq!(trace.stop_reason, StopReason::EarlyStop);
        assert!(trace.initial_ratio.unwrap() > cfg.epsilon);
        let last = trace.records.last().unwrap().ratio.unwrap();
        assert!(last <= cfg.epsilon);
        if trace.records.len() > 1 {
            assert!(trace.records[trace.records.len() - 2].ratio.unwrap() > cfg.epsilon);
        }
        assert!(g.log_det_cov() < 0.0);
    }
}
