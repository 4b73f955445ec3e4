//! Offline session plus every online session of a split, with scoring.

use std::time::{Duration, Instant};

use vbcgcd_core::eval::{
    align_new_labels, forgetting_rate, novelty_rate, session_accuracies, DetTrace, MetricsReport, NoveltyCount,
    SessionMetrics, REPORT_SCHEMA_VERSION,
};
use vbcgcd_core::pipeline::{predict, ClassTrace};
use vbcgcd_core::{run_offline, run_online_session, ModelStore, NumNew, PipelineConfig};

use crate::error::Result;
use crate::split::SessionSplit;

/// Per-session counts that the metrics report does not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionDiagnostics {
    pub session: u32,
    pub num_new: usize,
    /// Session samples whose true class was known before the session.
    pub true_old: usize,
    /// Of those, how many held an old id right after clustering.
    pub true_old_old_after_clustering: usize,
    /// Of those, how many held an old id after re-labeling.
    pub true_old_old_after_relabel: usize,
    pub relabel_flip_count: usize,
    pub dropped_classes: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: MetricsReport,
    pub store: ModelStore,
    pub diagnostics: Vec<SessionDiagnostics>,
    /// Log-determinant series of every final class fit.
    pub det_traces: Vec<DetTrace>,
}

fn to_det_traces(session: u32, traces: &[ClassTrace]) -> impl Iterator<Item = DetTrace> + '_ {
    traces.iter().map(move |t| DetTrace::from_fit(session, t.class_id, &t.trace))
}

fn truth_of(m: &vbcgcd_core::FeatureMatrix) -> Vec<u32> {
    m.labels().iter().map(|&l| l as u32).collect()
}

/// Runs the offline session and all online sessions of `split`.
///
/// New ids are matched to true classes once, on the final session's test
/// predictions, and that matching scores every session.
pub fn run_protocol(split: &SessionSplit, config: &PipelineConfig, keep_det_traces: bool) -> Result<RunResult> {
    config.validate()?;
    let c_l = split.num_offline_classes as u32;
    let offline = run_offline(&split.offline, config)?;
    let mut store = offline.store;
    let mut det_traces: Vec<DetTrace> = to_det_traces(0, &offline.fit_traces).collect();

    let mut test_preds: Vec<Vec<u32>> = vec![predict(&store, &split.tests[0], config.distance)?];
    let mut diagnostics = Vec::with_capacity(split.online.len());
    let mut novelty = Vec::with_capacity(split.online.len());
    for (t, session) in split.online.iter().enumerate() {
        let s = t as u32 + 1;
        let old_count = split.classes_through(t) as u32;
        let num_new = if config.estimate_new_classes {
            NumNew::Auto
        } else {
            NumNew::Fixed(split.new_classes_per_session[t])
        };
        // Ids the model knew before the session; differs from `old_count`
        // when earlier sessions dropped classes.
        let model_old = store.next_class_id();
        let started = Instant::now();
        let outcome = run_online_session(&mut store, session.unlabeled(), num_new, config)?;
        let wall_time = started.elapsed();
        det_traces.extend(to_det_traces(s, &outcome.fit_traces));

        let truth = session.ground_truth_for_evaluation();
        let is_old = |i: usize| truth[i] < old_count;
        let old_idx: Vec<usize> = (0..truth.len()).filter(|&i| is_old(i)).collect();
        diagnostics.push(SessionDiagnostics {
            session: s,
            num_new: outcome.num_new,
            true_old: old_idx.len(),
            true_old_old_after_clustering: old_idx.iter().filter(|&&i| outcome.cluster_labels[i] < model_old).count(),
            true_old_old_after_relabel: old_idx.iter().filter(|&&i| outcome.relabeled[i] < model_old).count(),
            relabel_flip_count: outcome.relabel_flip_count,
            dropped_classes: outcome.dropped.len(),
            wall_time,
        });
        let predicted_novel = outcome.predicted_labels.iter().filter(|&&p| p >= model_old).count();
        let true_novel = truth.len() - old_idx.len();
        let correct_novel = (0..truth.len())
            .filter(|&i| !is_old(i) && outcome.predicted_labels[i] >= model_old)
            .count();
        novelty.push(NoveltyCount {
            session: s,
            predicted_novel,
            true_novel,
            correct_novel,
            total: truth.len(),
        });
        test_preds.push(predict(&store, &split.tests[t + 1], config.distance)?);
    }

    let last = split.tests.len() - 1;
    let alignment = align_new_labels(&test_preds[last], &truth_of(&split.tests[last]), c_l)?;
    let mut per_session = Vec::with_capacity(split.tests.len());
    for (t, (test, pred)) in split.tests.iter().zip(&test_preds).enumerate() {
        let truth = truth_of(test);
        let old_count = if t == 0 { c_l } else { split.classes_through(t - 1) as u32 };
        let acc = session_accuracies(&alignment.apply(pred), &truth, old_count)?;
        per_session.push(if t == 0 {
            SessionMetrics {
                session: 0,
                acc_all: acc.acc_all,
                acc_old: None,
                acc_new: None,
                n_old: acc.n_old,
                n_new: 0,
            }
        } else {
            SessionMetrics {
                session: t as u32,
                acc_all: acc.acc_all,
                acc_old: acc.acc_old,
                acc_new: acc.acc_new,
                n_old: acc.n_old,
                n_new: acc.n_new,
            }
        });
    }

    let labeled_acc = |t: usize| -> Result<f64> {
        let truth = truth_of(&split.tests[t]);
        let aligned = alignment.apply(&test_preds[t]);
        let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] < c_l).collect();
        let hits = idx.iter().filter(|&&i| aligned[i] == i64::from(truth[i])).count();
        Ok(if idx.is_empty() { 0.0 } else { hits as f64 / idx.len() as f64 })
    };
    let m_f = forgetting_rate(labeled_acc(0)?, labeled_acc(last)?);
    let news: Vec<f64> = per_session.iter().skip(1).filter_map(|s| s.acc_new).collect();
    let m_d = if news.is_empty() { 0.0 } else { novelty_rate(&news)? };

    let report = MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        per_session,
        m_f,
        m_d,
        novelty_detection: novelty,
        det_traces: keep_det_traces.then(|| det_traces.clone()),
    };
    report.check_consistency()?;
    Ok(RunResult {
        report,
        store,
        diagnostics,
        det_traces,
    })
}
