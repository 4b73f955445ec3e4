//! Fitting and pipeline configuration.
//!
//! Defaults follow the published setup: learning rate `1e-5`, 1000 update
//! steps, early-stopping tolerance `0.01`, PCA to 384 dimensions, half of the
//! classes labeled with 80% of their training samples, five online sessions.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::DEFAULT_JITTER;

/// How the KL term of the ELBO is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlWeight {
    /// Divide the KL term by the class sample count.
    PerDatum,
    /// Use a fixed scale.
    Fixed(f64),
}

/// Configuration of a single variational class fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Step size applied to the gradient of the full-data ELBO.
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Minibatch size; `0` or anything `>= n` means full batch.
    pub batch_size: usize,
    /// Early-stopping tolerance on the determinant ratio.
    pub epsilon: f64,
    pub kl_weight: KlWeight,
    pub early_stop_enabled: bool,
    /// Plateau threshold on the per-datum ELBO change.
    pub plateau_tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            max_steps: 1000,
            batch_size: 0,
            epsilon: 0.01,
            kl_weight: KlWeight::PerDatum,
            early_stop_enabled: true,
            plateau_tol: 1e-6,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig("epsilon must be non-negative"));
        }
        if !(self.plateau_tol >= 0.0) {
            return Err(Error::InvalidConfig("plateau_tol must be non-negative"));
        }
        if let KlWeight::Fixed(w) = self.kl_weight {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidConfig("fixed KL weight must be non-negative"));
            }
        }
        Ok(())
    }
}

/// How class distributions are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassEstimator {
    /// Variational fit with determinant early stopping.
    Variational,
    /// Sample mean and covariance plus jitter.
    PointEstimate,
    /// Sample mean with identity covariance (Euclidean nearest class mean).
    ClassMean,
}

/// Distance used to assign samples to classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// `(x − μ)ᵀ Σ⁻¹ (x − μ)`.
    Mahalanobis,
    /// `‖x − μ‖²`, ignoring the covariance.
    Euclidean,
}

/// Class and sample schedule of a continual discovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionLayout {
    /// Fraction of classes that are labeled in the offline session.
    pub labeled_class_fraction: f64,
    /// Fraction of each class's training pool used when the class is
    /// introduced (offline or as a novel class).
    pub labeled_sample_fraction: f64,
    /// Fraction of each class's samples held out for testing.
    pub test_fraction: f64,
    pub sessions: usize,
    /// Novel classes per session; overridden by `schedule` when set.
    pub new_per_session: usize,
    /// Explicit per-session novel class counts.
    pub schedule: Option<Vec<usize>>,
    /// Samples drawn from every previously seen class into each session.
    pub carryover_per_known: usize,
}

impl Default for SessionLayout {
    fn default() -> Self {
        Self {
            labeled_class_fraction: 0.5,
            labeled_sample_fraction: 0.8,
            test_fraction: 1.0 / 6.0,
            sessions: 5,
            new_per_session: 10,
            schedule: None,
            carryover_per_known: 25,
        }
    }
}

impl SessionLayout {
    /// Novel class count for each online session.
    pub fn new_classes_per_session(&self) -> Vec<usize> {
        match &self.schedule {
            Some(s) => s.clone(),
            None => alloc::vec![self.new_per_session; self.sessions],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.labeled_class_fraction) {
            return Err(Error::InvalidConfig("labeled_class_fraction must be in (0, 1]"));
        }
        if !unit(self.labeled_sample_fraction) {
            return Err(Error::InvalidConfig("labeled_sample_fraction must be in (0, 1]"));
        }
        if !(self.test_fraction >= 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig("test_fraction must be in [0, 1)"));
        }
        if let Some(s) = &self.schedule {
            if s.len() != self.sessions {
                return Err(Error::InvalidConfig("schedule length must equal sessions"));
            }
        }
        Ok(())
    }
}

/// Everything a pipeline run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub epsilon: f64,
    pub batch_size: usize,
    pub plateau_tol: f64,
    pub kl_weight: KlWeight,
    pub seed: u64,
    /// PCA output dimension; `0` disables PCA, and so does any value not
    /// below the input dimension.
    pub pca_dim: usize,
    /// Center and rescale features with statistics of the offline set.
    pub standardize: bool,
    /// Pooled within-class standard deviation per dimension after
    /// standardization. `0` z-scores each dimension to unit total variance
    /// instead.
    pub class_scale: f64,
    /// Refit old classes on their re-labeled session members.
    pub refit_old: bool,
    /// Cluster with `old + new` centroids instead of `new` only.
    pub cluster_include_old: bool,
    /// New classes with fewer re-labeled members are dropped.
    pub min_class_size: usize,
    /// Estimate the number of novel classes per session by silhouette scan.
    pub estimate_new_classes: bool,
    pub k_min: usize,
    pub k_max: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_restarts: usize,
    pub early_stop_enabled: bool,
    /// Early stopping among the offline classes themselves.
    pub early_stop_offline: bool,
    pub estimator: ClassEstimator,
    /// Distance for re-labeling and classification.
    pub distance: Distance,
    /// Diagonal jitter for the point-estimate baseline.
    pub jitter: f64,
    pub layout: SessionLayout,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            learning_rate: fit.learning_rate,
            max_steps: fit.max_steps,
            epsilon: fit.epsilon,
            batch_size: fit.batch_size,
            plateau_tol: fit.plateau_tol,
            kl_weight: fit.kl_weight,
            seed: 0,
            pca_dim: 384,
            standardize: true,
            class_scale: 2.0,
            refit_old: false,
            cluster_include_old: false,
            min_class_size: 2,
            estimate_new_classes: false,
            k_min: 2,
            k_max: 20,
            kmeans_max_iters: 300,
            kmeans_restarts: 10,
            early_stop_enabled: true,
            early_stop_offline: true,
            estimator: ClassEstimator::Variational,
            distance: Distance::Mahalanobis,
            jitter: DEFAULT_JITTER,
            layout: SessionLayout::default(),
        }
    }
}

impl PipelineConfig {
    /// Fit settings for one class, with a seed derived from the run seed.
    pub fn fit_config(&self, early_stop: bool, salt: u64) -> FitConfig {
        FitConfig {
            learning_rate: self.learning_rate,
            max_steps: self.max_steps,
            batch_size: self.batch_size,
            epsilon: self.epsilon,
            kl_weight: self.kl_weight,
            early_stop_enabled: self.early_stop_enabled && early_stop,
            plateau_tol: self.plateau_tol,
            seed: self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fit_config(true, 0).validate()?;
        if self.min_class_size == 0 {
            return Err(Error::InvalidConfig("min_class_size must be at least 1"));
        }
        if self.k_min < 2 || self.k_min > self.k_max {
            return Err(Error::InvalidConfig("need 2 <= k_min <= k_max"));
        }
        if self.kmeans_max_iters == 0 || self.kmeans_restarts == 0 {
            return Err(Error::InvalidConfig("k-means iterations and restarts must be positive"));
        }
        if !(self.class_scale >= 0.0 && self.class_scale.is_finite()) {
            return Err(Error::InvalidConfig("class_scale must be finite and non-negative"));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidConfig("jitter must be non-negative"));
        }
        self.layout.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.learning_rate, 1e-5);
        assert_eq!(c.max_steps, 1000);
        assert_eq!(c.epsilon, 0.01);
        assert_eq!(c.pca_dim, 384);
        assert_eq!(c.layout.new_classes_per_session(), alloc::vec![10; 5]);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = PipelineConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.layout.schedule = Some(alloc::vec![1, 2]);
        assert!(c.validate().is_err());
    }
}
