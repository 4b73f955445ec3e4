use std::collections::BTreeSet;

use proptest::prelude::*;
use vbcgcd::split::{build_split, SessionSplit};
use vbcgcd::IoError;
use vbcgcd_core::{FeatureMatrix, SessionLayout};

/// `classes` classes of `per_class` one-dimensional samples; the value of
/// each sample is its row index, so subsets can be traced back to rows.
fn indexed_corpus(classes: usize, per_class: usize) -> FeatureMatrix {
    let n = classes * per_class;
    let data = (0..n).map(|i| i as f64).collect();
    let labels = (0..n).map(|i| (i % classes) as i32 * 3 + 1).collect();
    FeatureMatrix::new(1, data, labels).unwrap()
}

fn rows_of(m: &FeatureMatrix) -> Vec<usize> {
    m.data().iter().map(|&v| v as usize).collect()
}

fn layout() -> SessionLayout {
    SessionLayout {
        labeled_class_fraction: 0.5,
        labeled_sample_fraction: 0.8,
        test_fraction: 0.0,
        sessions: 5,
        new_per_session: 2,
        schedule: None,
        carryover_per_known: 5,
    }
}

#[test]
fn protocol_sizes_match_the_schedule() {
    let data = indexed_corpus(20, 100);
    let (split, manifest) = build_split(&data, &layout(), 1).unwrap();
    assert_eq!(split.num_offline_classes, 10);
    assert_eq!(split.offline.rows(), 10 * 80);
    assert_eq!(split.online.len(), 5);
    for (t, s) in split.online.iter().enumerate() {
        let known = 10 + 2 * t;
        assert_eq!(s.len(), 2 * 80 + known * 5, "session {}", t + 1);
        assert!(s.unlabeled().labels().iter().all(|&l| l == -1));
    }
    assert_eq!(manifest.class_order.len(), 20);
    assert_eq!(split.classes_through(5), 20);
}

#[test]
fn subsets_are_disjoint_and_renumbered() {
    let data = indexed_corpus(12, 50);
    let l = SessionLayout {
        test_fraction: 0.2,
        sessions: 3,
        ..layout()
    };
    let (split, manifest) = build_split(&data, &l, 9).unwrap();
    // Rows never repeat inside a subset, never leave the training side, and
    // a session's novel-class rows appear nowhere else. Carryover rows may
    // recur in later sessions.
    let offline: BTreeSet<usize> = rows_of(&split.offline).into_iter().collect();
    assert_eq!(offline.len(), split.offline.rows());
    let mut train = offline.clone();
    let mut intro = offline;
    for (t, s) in split.online.iter().enumerate() {
        let rows = rows_of(s.unlabeled());
        let unique: BTreeSet<usize> = rows.iter().copied().collect();
        assert_eq!(unique.len(), rows.len());
        let first_new = split.classes_through(t) as u32;
        for (r, &c) in rows.iter().zip(s.ground_truth_for_evaluation()) {
            if c >= first_new {
                assert!(intro.insert(*r), "novel row {r} seen before");
            } else {
                assert!(!intro.contains(r), "carryover row {r} was an introduction sample");
            }
        }
        train.extend(unique);
    }
    let last_test: BTreeSet<usize> = rows_of(split.tests.last().unwrap()).into_iter().collect();
    assert!(train.is_disjoint(&last_test));
    // Cumulative test sets grow and are nested.
    for w in split.tests.windows(2) {
        let a: BTreeSet<usize> = rows_of(&w[0]).into_iter().collect();
        let b: BTreeSet<usize> = rows_of(&w[1]).into_iter().collect();
        assert!(a.is_subset(&b) && a.len() < b.len());
    }
    // Offline labels are 0..C_l, session truths never exceed the classes seen.
    assert!(split.offline.labels().iter().all(|&l| (0..6).contains(&l)));
    for (t, s) in split.online.iter().enumerate() {
        let seen = split.classes_through(t + 1) as u32;
        assert!(s.ground_truth_for_evaluation().iter().all(|&c| c < seen));
        let new: BTreeSet<u32> = s
            .ground_truth_for_evaluation()
            .iter()
            .copied()
            .filter(|&c| c >= split.classes_through(t) as u32)
            .collect();
        assert_eq!(new.len(), 2);
    }
    // Materializing the manifest reproduces the split.
    let again = SessionSplit::from_manifest(&data, &manifest).unwrap();
    assert_eq!(again.offline, split.offline);
    assert_eq!(again.tests, split.tests);
    for (a, b) in again.online.iter().zip(&split.online) {
        assert_eq!(a.unlabeled(), b.unlabeled());
        assert_eq!(a.ground_truth_for_evaluation(), b.ground_truth_for_evaluation());
    }
}

#[test]
fn equal_seeds_give_identical_manifests() {
    let data = indexed_corpus(20, 30);
    let (_, a) = build_split(&data, &layout(), 5).unwrap();
    let (_, b) = build_split(&data, &layout(), 5).unwrap();
    let (_, c) = build_split(&data, &layout(), 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn tiny_class_is_reported() {
    let mut data = indexed_corpus(4, 10);
    data.extend(&FeatureMatrix::new(1, vec![99.0], vec![77]).unwrap()).unwrap();
    let l = SessionLayout {
        labeled_class_fraction: 0.4,
        labeled_sample_fraction: 0.8,
        test_fraction: 0.5,
        sessions: 1,
        new_per_session: 3,
        schedule: None,
        carryover_per_known: 0,
    };
    match build_split(&data, &l, 0) {
        Err(IoError::InsufficientSamples { class, .. }) => assert_eq!(class, 77),
        other => panic!("expected InsufficientSamples, got {other:?}"),
    }
}

#[test]
fn carryover_beyond_the_pool_is_reported() {
    let data = indexed_corpus(4, 10);
    let l = SessionLayout {
        labeled_class_fraction: 0.5,
        sessions: 1,
        new_per_session: 2,
        carryover_per_known: 5,
        ..layout()
    };
    assert!(matches!(
        build_split(&data, &l, 0),
        Err(IoError::InsufficientSamples { required: 5, available: 2, .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn sessions_cover_exactly_the_scheduled_counts(
        seed in any::<u64>(),
        per_class in 20usize..40,
        carry in 0usize..4,
    ) {
        let data = indexed_corpus(8, per_class);
        let l = SessionLayout {
            labeled_class_fraction: 0.5,
            labeled_sample_fraction: 0.8,
            test_fraction: 0.25,
            sessions: 2,
            new_per_session: 2,
            schedule: None,
            carryover_per_known: carry,
        };
        let (split, manifest) = build_split(&data, &l, seed).unwrap();
        let n_test = (0.25 * per_class as f64).round() as usize;
        let n_intro = (0.8 * (per_class - n_test) as f64).round() as usize;
        prop_assert_eq!(split.offline.rows(), 4 * n_intro);
        for (t, s) in split.online.iter().enumerate() {
            prop_assert_eq!(s.len(), 2 * n_intro + (4 + 2 * t) * carry);
        }
        let mut seen: BTreeSet<usize> = manifest.offline.iter().copied().collect();
        prop_assert_eq!(seen.len(), manifest.offline.len());
        for idx in &manifest.online {
            let unique: BTreeSet<usize> = idx.iter().copied().collect();
            prop_assert_eq!(unique.len(), idx.len());
            seen.extend(unique);
        }
        for &i in manifest.tests.last().unwrap() {
            prop_assert!(!seen.contains(&i));
        }
    }
}
