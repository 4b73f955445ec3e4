//! Variational Bayes Gaussian class modelling for continual generalized
//! category discovery over pre-extracted feature vectors.
//!
//! Each class is represented by one multivariate normal, fitted by gradient
//! ascent on a closed-form ELBO and stored as a Cholesky factor. Samples are
//! classified by a Mahalanobis nearest-class-mean rule. Unlabeled sessions are
//! clustered, provisionally fitted, re-labeled against the stored classes and
//! refitted, with covariance-determinant early stopping keeping new classes on
//! the same scale as the old ones.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, dataset splits
//! and the command line live in the `vbcgcd` companion crate.
#![no_std]
#![warn(missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cluster;
pub mod config;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod linalg;
pub mod math;
pub mod matrix;
pub mod pca;
pub mod pipeline;
pub mod store;
pub mod vb;

pub use config::{ClassEstimator, Distance, FitConfig, KlWeight, PipelineConfig, SessionLayout};
pub use error::{Error, Result};
pub use gaussian::{bhattacharyya, class_mean_estimate, make_gaussian, point_estimate, ClassGaussian};
pub use matrix::FeatureMatrix;
pub use pipeline::{
    classify, predict, run_offline, run_online_session, Classification, NumNew, OfflineOutcome, SessionOutcome,
};
pub use store::{ModelStore, Standardizer};
