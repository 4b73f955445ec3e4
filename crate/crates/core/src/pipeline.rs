//! Offline fitting, classification and the online discovery session.
//!
//! An online session runs in five phases on transformed features:
//!
//! 1. optionally estimate the number of novel classes by silhouette scan;
//! 2. k-means over every session sample gives provisional new ids;
//! 3. each provisional cluster is fitted against the stored classes;
//! 4. every sample is re-classified against stored ∪ provisional classes,
//!    which pulls samples of known classes back to their old ids;
//! 5. the surviving new ids are refitted on their re-labeled members and
//!    added to the store.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::time::Duration;

use crate::cluster::{estimate_num_classes, kmeans_restarts};
use crate::config::{ClassEstimator, Distance, PipelineConfig};
use crate::error::{Error, Result};
use crate::gaussian::{class_mean_estimate, point_estimate, ClassGaussian};
use crate::math::{exp, ln};
use crate::matrix::FeatureMatrix;
use crate::pca::pca_fit;
use crate::store::{ModelStore, Standardizer};
use crate::vb::{fit_all_classes, fit_class, FitTrace};

/// Number of novel classes expected in a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumNew {
    Fixed(usize),
    /// Estimate with a silhouette scan over `[k_min, k_max]`.
    Auto,
}

/// Fit history of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTrace {
    pub class_id: u32,
    pub trace: FitTrace,
}

/// Result of [`run_offline`].
#[derive(Debug, Clone)]
pub struct OfflineOutcome {
    pub store: ModelStore,
    pub fit_traces: Vec<ClassTrace>,
}

/// A provisional class that ended with too few members.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DroppedClass {
    pub provisional_id: u32,
    pub members: usize,
}

/// What an online session did.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub session: u32,
    /// Number of novel classes the session was clustered for.
    pub num_new: usize,
    /// Provisional ids from clustering (phase 2).
    pub cluster_labels: Vec<u32>,
    /// Ids after re-labeling (phase 4), before dropping small classes.
    pub relabeled: Vec<u32>,
    /// Final ids, all below the store's `next_class_id`.
    pub predicted_labels: Vec<u32>,
    /// Samples holding a new id in `predicted_labels`.
    pub novel_count: usize,
    /// Samples whose id changed during re-labeling.
    pub relabel_flip_count: usize,
    pub dropped: Vec<DroppedClass>,
    pub provisional_traces: Vec<ClassTrace>,
    pub fit_traces: Vec<ClassTrace>,
    /// Filled in by callers that can measure time.
    pub wall_time: Option<Duration>,
}

/// Posterior over the stored classes for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class_id: u32,
    /// Probabilities in ascending class id order.
    pub posterior: Vec<f64>,
}

fn estimate_one(
    data: &FeatureMatrix,
    refs: &[f64],
    config: &PipelineConfig,
    early_stop: bool,
    salt: u64,
) -> Result<(ClassGaussian, Option<FitTrace>)> {
    match config.estimator {
        ClassEstimator::Variational => {
            let (g, t) = fit_class(data, refs, &config.fit_config(early_stop, salt))?;
            Ok((g, Some(t)))
        }
        ClassEstimator::PointEstimate => Ok((point_estimate(data, config.jitter)?, None)),
        ClassEstimator::ClassMean => Ok((class_mean_estimate(data)?, None)),
    }
}

/// Fits every labeled class in `data` in ascending id order, accumulating
/// references as it goes.
fn fit_labeled(
    data: &FeatureMatrix,
    store: &ModelStore,
    config: &PipelineConfig,
    session: u32,
    early_stop: bool,
    refit: bool,
) -> Result<(Vec<ClassGaussian>, Vec<ClassTrace>)> {
    match config.estimator {
        ClassEstimator::Variational => {
            let salt = u64::from(session) << 32;
            let fitted = fit_all_classes(data, store, &config.fit_config(early_stop, salt), session, refit)?;
            let traces = fitted
                .iter()
                .map(|(g, t)| ClassTrace {
                    class_id: g.class_id(),
                    trace: t.clone(),
                })
                .collect();
            Ok((fitted.into_iter().map(|(g, _)| g).collect(), traces))
        }
        _ => {
            let mut out = Vec::new();
            for label in data.distinct_labels() {
                let id = label as u32;
                if store.get(id).is_some() && !refit {
                    continue;
                }
                let (g, _) = estimate_one(&data.rows_with_label(label), &[], config, false, 0)?;
                out.push(g.with_identity(id, session));
            }
            Ok((out, Vec::new()))
        }
    }
}

/// Fits the feature transforms and one distribution per labeled class.
///
/// `offline` must be fully labeled with ids `0..C`.
pub fn run_offline(offline: &FeatureMatrix, config: &PipelineConfig) -> Result<OfflineOutcome> {
    config.validate()?;
    if offline.is_empty() {
        return Err(Error::MissingLabels("offline set is empty"));
    }
    if !offline.fully_labeled() {
        return Err(Error::MissingLabels("offline samples must all be labeled"));
    }
    let ids = offline.distinct_labels();
    if ids.iter().enumerate().any(|(i, &l)| l as usize != i) {
        return Err(Error::MissingLabels("offline class ids must be dense from 0"));
    }

    let standardizer = match (config.standardize, config.class_scale > 0.0) {
        (false, _) => None,
        (true, true) => Some(Standardizer::fit_within_class(offline, config.class_scale)?),
        (true, false) => Some(Standardizer::fit(offline)?),
    };
    let mut features = offline.clone();
    if let Some(s) = &standardizer {
        features = features.map_rows(s.dim(), |src, dst| s.apply(src, dst));
    }
    let d_in = features.dim();
    let pca = if config.pca_dim > 0 && config.pca_dim < d_in {
        let p = pca_fit(&features, config.pca_dim.min(features.rows()))?;
        features = p.transform(&features)?;
        Some(p)
    } else {
        None
    };

    let mut store = ModelStore::new(features.dim());
    store.set_transforms(standardizer, pca)?;
    let (classes, fit_traces) = fit_labeled(&features, &store, config, 0, config.early_stop_offline, false)?;
    for g in classes {
        store.insert(g)?;
    }
    Ok(OfflineOutcome { store, fit_traces })
}

fn distance_sq(g: &ClassGaussian, z: &[f64], distance: Distance) -> Result<f64> {
    match distance {
        Distance::Mahalanobis => g.mahalanobis_sq(z),
        Distance::Euclidean => {
            if z.len() != g.dim() {
                return Err(Error::DimensionMismatch {
                    expected: g.dim(),
                    found: z.len(),
                });
            }
            Ok(z.iter().zip(g.mean()).map(|(a, b)| (a - b) * (a - b)).sum())
        }
    }
}

/// Index of the nearest class; ties go to the earlier entry.
fn nearest(classes: &[&ClassGaussian], z: &[f64], distance: Distance) -> Result<usize> {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, g) in classes.iter().enumerate() {
        let d = distance_sq(g, z, distance)?;
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// Classifies a vector already in the store's feature space.
pub fn classify_transformed(store: &ModelStore, z: &[f64]) -> Result<Classification> {
    if store.is_empty() {
        return Err(Error::EmptyModel);
    }
    let mut logits = Vec::with_capacity(store.len());
    let mut best = (0u32, f64::NEG_INFINITY);
    for g in store.classes() {
        let logit = -0.5 * g.mahalanobis_sq(z)?;
        if logit > best.1 {
            best = (g.class_id(), logit);
        }
        logits.push(logit);
    }
    let max = best.1;
    let mut posterior: Vec<f64> = logits.iter().map(|l| exp(l - max)).collect();
    let sum: f64 = posterior.iter().sum();
    posterior.iter_mut().for_each(|p| *p /= sum);
    debug_assert!(ln(sum).is_finite());
    Ok(Classification {
        class_id: best.0,
        posterior,
    })
}

/// Nearest-class-mean classification with Mahalanobis similarity: the
/// posterior is a softmax over `-½ (x − μ_k)ᵀ Σ_k⁻¹ (x − μ_k)`.
pub fn classify(store: &ModelStore, x: &[f64]) -> Result<Classification> {
    if store.is_empty() {
        return Err(Error::EmptyModel);
    }
    classify_transformed(store, &store.transform(x)?)
}

/// Predicted ids for every row of a raw-feature matrix.
pub fn predict(store: &ModelStore, data: &FeatureMatrix, distance: Distance) -> Result<Vec<u32>> {
    if store.is_empty() {
        return Err(Error::EmptyModel);
    }
    let z = store.transform_matrix(data)?;
    let classes: Vec<&ClassGaussian> = store.classes().collect();
    z.iter_rows()
        .map(|r| nearest(&classes, r, distance).map(|i| classes[i].class_id()))
        .collect()
}

/// Runs one unlabeled session and grows `store` with the discovered classes.
///
/// Labels on `unlabeled` are ignored. On error the store is left untouched.
pub fn run_online_session(
    store: &mut ModelStore,
    unlabeled: &FeatureMatrix,
    num_new: NumNew,
    config: &PipelineConfig,
) -> Result<SessionOutcome> {
    config.validate()?;
    if store.is_empty() {
        return Err(Error::EmptyModel);
    }
    if unlabeled.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let session = store.session_count() + 1;
    let session_seed = config.seed ^ (u64::from(session)).wrapping_mul(0xA076_1D64_78BD_642F);
    let z = store.transform_matrix(&unlabeled.without_labels())?;
    let n = z.rows();
    let old_count = store.next_class_id();
    let old: Vec<&ClassGaussian> = store.classes().collect();

    let k_new = match num_new {
        NumNew::Fixed(k) => k,
        NumNew::Auto => {
            let k_max = config.k_max.min(n.saturating_sub(1));
            if k_max < config.k_min {
                return Err(Error::InvalidKRange {
                    k_min: config.k_min,
                    k_max: config.k_max,
                    points: n,
                });
            }
            estimate_num_classes(&z, config.k_min, k_max, session_seed)?
        }
    };

    if k_new == 0 {
        let predicted: Vec<u32> = z
            .iter_rows()
            .map(|r| nearest(&old, r, config.distance).map(|i| old[i].class_id()))
            .collect::<Result<_>>()?;
        store.set_session_count(session);
        return Ok(SessionOutcome {
            session,
            num_new: 0,
            cluster_labels: predicted.clone(),
            relabeled: predicted.clone(),
            predicted_labels: predicted,
            novel_count: 0,
            relabel_flip_count: 0,
            dropped: Vec::new(),
            provisional_traces: Vec::new(),
            fit_traces: Vec::new(),
            wall_time: None,
        });
    }

    // Phase 2: pseudo-labels.
    let k_cluster = if config.cluster_include_old {
        old_count as usize + k_new
    } else {
        k_new
    };
    let km = kmeans_restarts(&z, k_cluster, session_seed, config.kmeans_max_iters, config.kmeans_restarts)?;
    let cluster_labels: Vec<u32> = km.assignments.iter().map(|&c| old_count + c as u32).collect();

    // Phase 3: provisional fits against the stored classes.
    let old_refs = store.log_dets();
    let mut provisional: Vec<ClassGaussian> = Vec::new();
    let mut provisional_traces = Vec::new();
    for (c, size) in km.cluster_sizes().into_iter().enumerate() {
        if size < config.min_class_size {
            continue;
        }
        let id = old_count + c as u32;
        let members: Vec<usize> = (0..n).filter(|&i| cluster_labels[i] == id).collect();
        let (g, trace) = estimate_one(&z.select(&members), &old_refs, config, true, (u64::from(session) << 32) | u64::from(id))?;
        if let Some(trace) = trace {
            provisional_traces.push(ClassTrace { class_id: id, trace });
        }
        provisional.push(g.with_identity(id, session));
    }

    // Phase 4: re-label against stored ∪ provisional.
    let mut union: Vec<&ClassGaussian> = old.clone();
    union.extend(provisional.iter());
    let mut relabeled: Vec<u32> = z
        .iter_rows()
        .map(|r| nearest(&union, r, config.distance).map(|i| union[i].class_id()))
        .collect::<Result<_>>()?;
    if config.cluster_include_old {
        // Keep only the k_new provisional classes that attracted the most
        // samples; the rest were clusters of known classes.
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for &l in relabeled.iter().filter(|&&l| l >= old_count) {
            *counts.entry(l).or_default() += 1;
        }
        let mut ranked: Vec<(u32, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let keep: Vec<u32> = ranked.iter().take(k_new).map(|&(id, _)| id).collect();
        let mut reduced: Vec<&ClassGaussian> = old.clone();
        reduced.extend(provisional.iter().filter(|g| keep.contains(&g.class_id())));
        for (i, r) in z.iter_rows().enumerate() {
            if relabeled[i] >= old_count && !keep.contains(&relabeled[i]) {
                relabeled[i] = reduced[nearest(&reduced, r, config.distance)?].class_id();
            }
        }
    }
    let relabel_flip_count = relabeled
        .iter()
        .zip(&cluster_labels)
        .filter(|(a, b)| a != b)
        .count();

    // Phase 5: final fit of surviving new classes, ids compacted.
    let mut member_counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in relabeled.iter().filter(|&&l| l >= old_count) {
        *member_counts.entry(l).or_default() += 1;
    }
    let mut compact: BTreeMap<u32, u32> = BTreeMap::new();
    let mut dropped = Vec::new();
    for (&pid, &count) in &member_counts {
        if count >= config.min_class_size {
            let next = old_count + compact.len() as u32;
            compact.insert(pid, next);
        } else {
            dropped.push(DroppedClass {
                provisional_id: pid,
                members: count,
            });
        }
    }
    let new_idx: Vec<usize> = (0..n).filter(|&i| compact.contains_key(&relabeled[i])).collect();
    let new_labels: Vec<i32> = new_idx.iter().map(|&i| compact[&relabeled[i]] as i32).collect();
    let new_data = z.select(&new_idx).with_labels(new_labels)?;
    let (new_classes, mut fit_traces) = if new_data.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        fit_labeled(&new_data, store, config, session, true, false)?
    };

    let mut refit_classes = Vec::new();
    if config.refit_old {
        let idx: Vec<usize> = (0..n).filter(|&i| relabeled[i] < old_count).collect();
        let labels: Vec<i32> = idx.iter().map(|&i| relabeled[i] as i32).collect();
        let old_data = z.select(&idx).with_labels(labels)?;
        let mut keep = Vec::new();
        for label in old_data.distinct_labels() {
            let members: Vec<usize> = (0..old_data.rows()).filter(|&i| old_data.label(i) == label).collect();
            if members.len() >= config.min_class_size {
                keep.extend(members);
            }
        }
        keep.sort_unstable();
        let old_data = old_data.select(&keep);
        if !old_data.is_empty() {
            let (classes, traces) = fit_labeled(&old_data, store, config, session, true, true)?;
            refit_classes = classes;
            fit_traces.extend(traces);
        }
    }

    // Commit.
    for g in new_classes.into_iter().chain(refit_classes) {
        store.insert(g)?;
    }
    store.set_session_count(session);

    let final_classes: Vec<&ClassGaussian> = store.classes().collect();
    let mut predicted_labels = Vec::with_capacity(n);
    for (i, r) in z.iter_rows().enumerate() {
        let l = relabeled[i];
        let p = if l < old_count {
            l
        } else if let Some(&id) = compact.get(&l) {
            id
        } else {
            final_classes[nearest(&final_classes, r, config.distance)?].class_id()
        };
        predicted_labels.push(p);
    }
    let novel_count = predicted_labels.iter().filter(|&&l| l >= old_count).count();

    Ok(SessionOutcome {
        session,
        num_new: k_new,
        cluster_labels,
        relabeled,
        predicted_labels,
        novel_count,
        relabel_flip_count,
        dropped,
        provisional_traces,
        fit_traces,
        wall_time: None,
    })
}
