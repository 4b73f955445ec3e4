//! Offline / online / test partition of a labeled corpus.
//!
//! Classes are shuffled with the seed; the first `labeled_class_fraction`
//! become the offline classes and the rest are introduced in schedule order.
//! Class ids are renumbered in introduction order, so the offline classes are
//! `0..C_l` and every session's novel classes follow the previous ones.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vbcgcd_core::{FeatureMatrix, SessionLayout};

use crate::error::{IoError, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Sample indices into the source feature file for every subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub schema_version: u32,
    pub seed: u64,
    /// Source label of each renumbered class.
    pub class_order: Vec<i32>,
    pub num_offline_classes: usize,
    pub new_classes_per_session: Vec<usize>,
    pub offline: Vec<usize>,
    pub online: Vec<Vec<usize>>,
    /// `tests[t]` covers every class seen through session `t`.
    pub tests: Vec<Vec<usize>>,
}

/// One unlabeled session. Ground truth is kept for scoring only.
#[derive(Debug, Clone)]
pub struct OnlineSession {
    data: FeatureMatrix,
    truth: Vec<u32>,
}

impl OnlineSession {
    /// Session samples with every label set to −1.
    pub fn unlabeled(&self) -> &FeatureMatrix {
        &self.data
    }

    /// Renumbered class ids, for evaluation code only.
    pub fn ground_truth_for_evaluation(&self) -> &[u32] {
        &self.truth
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SessionSplit {
    pub offline: FeatureMatrix,
    pub online: Vec<OnlineSession>,
    pub tests: Vec<FeatureMatrix>,
    pub num_offline_classes: usize,
    pub new_classes_per_session: Vec<usize>,
}

impl SessionSplit {
    /// Number of classes known after session `t` (0 = offline).
    pub fn classes_through(&self, t: usize) -> usize {
        self.num_offline_classes + self.new_classes_per_session[..t].iter().sum::<usize>()
    }

    /// Materializes the subsets named in `manifest`.
    pub fn from_manifest(data: &FeatureMatrix, manifest: &SplitManifest) -> Result<Self> {
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(IoError::Config(format!(
                "unsupported manifest schema_version {}",
                manifest.schema_version
            )));
        }
        if manifest.online.len() != manifest.new_classes_per_session.len()
            || manifest.tests.len() != manifest.online.len() + 1
        {
            return Err(IoError::Config("manifest subset counts disagree".into()));
        }
        let mut renumber = std::collections::HashMap::new();
        for (new, &orig) in manifest.class_order.iter().enumerate() {
            renumber.insert(orig, new as i32);
        }
        let pick = |idx: &[usize]| -> Result<FeatureMatrix> {
            if let Some(&bad) = idx.iter().find(|&&i| i >= data.rows()) {
                return Err(IoError::Config(format!(
                    "manifest index {bad} out of range for {} samples",
                    data.rows()
                )));
            }
            let m = data.select(idx);
            let labels = m
                .labels()
                .iter()
                .map(|l| {
                    renumber
                        .get(l)
                        .copied()
                        .ok_or_else(|| IoError::Config(format!("label {l} missing from manifest class order")))
                })
                .collect::<Result<Vec<i32>>>()?;
            Ok(m.with_labels(labels)?)
        };
        let offline = pick(&manifest.offline)?;
        let online = manifest
            .online
            .iter()
            .map(|idx| {
                let m = pick(idx)?;
                let truth = m.labels().iter().map(|&l| l as u32).collect();
                Ok(OnlineSession {
                    data: m.without_labels(),
                    truth,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let tests = manifest.tests.iter().map(|idx| pick(idx)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            offline,
            online,
            tests,
            num_offline_classes: manifest.num_offline_classes,
            new_classes_per_session: manifest.new_classes_per_session.clone(),
        })
    }
}

fn count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

/// Builds a seeded split of a fully labeled corpus.
pub fn build_split(data: &FeatureMatrix, layout: &SessionLayout, seed: u64) -> Result<(SessionSplit, SplitManifest)> {
    layout.validate()?;
    if !data.fully_labeled() || data.is_empty() {
        return Err(IoError::Config("split input must be non-empty and fully labeled".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = data.distinct_labels();
    classes.shuffle(&mut rng);
    let schedule = layout.new_classes_per_session();
    let num_offline = count(layout.labeled_class_fraction, classes.len()).max(1);
    let needed = num_offline + schedule.iter().sum::<usize>();
    if needed > classes.len() {
        return Err(IoError::Config(format!(
            "schedule needs {needed} classes, corpus has {}",
            classes.len()
        )));
    }
    classes.truncate(needed);

    // Per class: shuffled test part, introduction part and carryover pool.
    let mut tests: Vec<Vec<usize>> = Vec::with_capacity(needed);
    let mut intro: Vec<Vec<usize>> = Vec::with_capacity(needed);
    let mut pools: Vec<Vec<usize>> = Vec::with_capacity(needed);
    for &label in &classes {
        let mut idx: Vec<usize> = (0..data.rows()).filter(|&i| data.label(i) == label).collect();
        idx.shuffle(&mut rng);
        let n_test = count(layout.test_fraction, idx.len());
        let train = idx.split_off(n_test);
        let n_intro = count(layout.labeled_sample_fraction, train.len());
        if (layout.test_fraction > 0.0 && n_test == 0) || n_intro == 0 {
            return Err(IoError::InsufficientSamples {
                class: label,
                available: idx.len() + train.len(),
                required: 2,
            });
        }
        let mut train = train;
        let pool = train.split_off(n_intro);
        tests.push(idx);
        intro.push(train);
        pools.push(pool);
    }

    let mut offline: Vec<usize> = intro[..num_offline].concat();
    offline.sort_unstable();
    let mut online = Vec::with_capacity(schedule.len());
    let mut known = num_offline;
    for &k in &schedule {
        let mut session: Vec<usize> = intro[known..known + k].concat();
        for c in 0..known {
            if pools[c].len() < layout.carryover_per_known {
                return Err(IoError::InsufficientSamples {
                    class: classes[c],
                    available: pools[c].len(),
                    required: layout.carryover_per_known,
                });
            }
            session.extend(pools[c].choose_multiple(&mut rng, layout.carryover_per_known));
        }
        session.sort_unstable();
        online.push(session);
        known += k;
    }
    let mut test_sets = Vec::with_capacity(schedule.len() + 1);
    let mut seen = num_offline;
    for t in 0..=schedule.len() {
        if t > 0 {
            seen += schedule[t - 1];
        }
        let mut idx: Vec<usize> = tests[..seen].concat();
        idx.sort_unstable();
        test_sets.push(idx);
    }

    let manifest = SplitManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed,
        class_order: classes,
        num_offline_classes: num_offline,
        new_classes_per_session: schedule,
        offline,
        online,
        tests: test_sets,
    };
    let split = SessionSplit::from_manifest(data, &manifest)?;
    Ok((split, manifest))
}
