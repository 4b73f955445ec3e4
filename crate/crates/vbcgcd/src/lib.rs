//! File formats, dataset splits, synthetic corpora and run orchestration
//! around `vbcgcd-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod features;
pub mod report;
pub mod runner;
pub mod split;
pub mod synth;
pub mod vbgm;

pub use error::{IoError, Result};
