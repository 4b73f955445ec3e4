//! Scoring of continual discovery runs.
//!
//! Discovered classes carry arbitrary ids, so predictions for new classes are
//! matched to ground truth with an optimal one-to-one assignment before
//! accuracies are computed. Old (labeled or previously discovered) ids are
//! compared as-is.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vb::FitTrace;

/// Label given to predictions with no matching ground-truth class.
pub const UNMATCHED: i64 = -1;

/// Optimal assignment of rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row, `None` for rows left out when there are
    /// more rows than columns.
    pub row_to_col: Vec<Option<usize>>,
    pub cost: f64,
}

/// Minimum-cost assignment for a `rows × cols` cost matrix (row-major).
///
/// Assigns `min(rows, cols)` pairs using the shortest augmenting path
/// method with potentials, `O(n² m)`.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Result<Assignment> {
    if cost.len() != rows * cols {
        return Err(Error::LengthMismatch {
            left: rows * cols,
            right: cost.len(),
        });
    }
    if let Some(pos) = cost.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCost {
            row: pos / cols.max(1),
            col: pos % cols.max(1),
        });
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            row_to_col: alloc::vec![None; rows],
            cost: 0.0,
        });
    }
    let transposed = rows > cols;
    let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };
    let at = |i: usize, j: usize| -> f64 {
        if transposed {
            cost[j * cols + i]
        } else {
            cost[i * cols + j]
        }
    };

    // 1-based potentials; column 0 is the virtual source.
    let mut u = alloc::vec![0.0; n + 1];
    let mut v = alloc::vec![0.0; m + 1];
    let mut owner = alloc::vec![0usize; m + 1];
    let mut way = alloc::vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = alloc::vec![f64::INFINITY; m + 1];
        let mut used = alloc::vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = alloc::vec![None; rows];
    for j in 1..=m {
        if owner[j] == 0 {
            continue;
        }
        let (r, c) = if transposed {
            (j - 1, owner[j] - 1)
        } else {
            (owner[j] - 1, j - 1)
        };
        row_to_col[r] = Some(c);
    }
    let total = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r * cols + c]))
        .sum();
    Ok(Assignment {
        row_to_col,
        cost: total,
    })
}

/// Mapping from predicted ids to ground-truth ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Ids below this are old and map to themselves.
    pub old_count: u32,
    /// Predicted new id → ground-truth id, or [`UNMATCHED`].
    pub mapping: BTreeMap<u32, i64>,
}

impl Alignment {
    pub fn map(&self, predicted: u32) -> i64 {
        if predicted < self.old_count {
            i64::from(predicted)
        } else {
            self.mapping.get(&predicted).copied().unwrap_or(UNMATCHED)
        }
    }

    pub fn apply(&self, predicted: &[u32]) -> Vec<i64> {
        predicted.iter().map(|&p| self.map(p)).collect()
    }
}

/// Matches predicted new ids (`>= old_count`) to ground-truth new ids by
/// maximizing agreement counts. Ties prefer lower ground-truth ids.
pub fn align_new_labels(predicted: &[u32], truth: &[u32], old_count: u32) -> Result<Alignment> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let mut pred_ids: Vec<u32> = predicted.iter().copied().filter(|&p| p >= old_count).collect();
    pred_ids.sort_unstable();
    pred_ids.dedup();
    let mut true_ids: Vec<u32> = truth.iter().copied().filter(|&t| t >= old_count).collect();
    true_ids.sort_unstable();
    true_ids.dedup();

    let rows = pred_ids.len();
    let cols = true_ids.len();
    let mut counts = alloc::vec![0u64; rows * cols];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p < old_count || t < old_count {
            continue;
        }
        let r = pred_ids.binary_search(&p).expect("collected above");
        let c = true_ids.binary_search(&t).expect("collected above");
        counts[r * cols + c] += 1;
    }
    // Counts dominate; the column index only separates equal-count choices.
    let weight = (cols * rows.min(cols) + 1) as f64;
    let cost: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(idx, &c)| -(c as f64) * weight + (idx % cols.max(1)) as f64)
        .collect();
    let assignment = hungarian(&cost, rows, cols)?;
    let mapping = pred_ids
        .iter()
        .zip(&assignment.row_to_col)
        .map(|(&p, col)| (p, col.map_or(UNMATCHED, |c| i64::from(true_ids[c]))))
        .collect();
    Ok(Alignment { old_count, mapping })
}

/// Accuracy over all samples and over the old / new partitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionAccuracy {
    pub acc_all: f64,
    pub acc_old: Option<f64>,
    pub acc_new: Option<f64>,
    pub n_old: usize,
    pub n_new: usize,
}

/// `acc_old` covers ground truth below `old_count`, `acc_new` the rest.
pub fn session_accuracies(pred_aligned: &[i64], truth: &[u32], old_count: u32) -> Result<SessionAccuracy> {
    if pred_aligned.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred_aligned.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyList);
    }
    let (mut hit_old, mut n_old, mut hit_new, mut n_new) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred_aligned.iter().zip(truth) {
        let hit = p == i64::from(t);
        if t < old_count {
            n_old += 1;
            hit_old += usize::from(hit);
        } else {
            n_new += 1;
            hit_new += usize::from(hit);
        }
    }
    let ratio = |h: usize, n: usize| (n > 0).then(|| h as f64 / n as f64);
    Ok(SessionAccuracy {
        acc_all: (hit_old + hit_new) as f64 / truth.len() as f64,
        acc_old: ratio(hit_old, n_old),
        acc_new: ratio(hit_new, n_new),
        n_old,
        n_new,
    })
}

/// Accuracy drop on the originally labeled classes; negative means the
/// final model is better.
pub fn forgetting_rate(acc_labeled_at_start: f64, acc_labeled_at_end: f64) -> f64 {
    acc_labeled_at_start - acc_labeled_at_end
}

/// Mean new-class accuracy across online sessions.
pub fn novelty_rate(acc_new_per_session: &[f64]) -> Result<f64> {
    if acc_new_per_session.is_empty() {
        return Err(Error::EmptyList);
    }
    Ok(acc_new_per_session.iter().sum::<f64>() / acc_new_per_session.len() as f64)
}

/// Per-session accuracies in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session: u32,
    pub acc_all: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acc_old: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acc_new: Option<f64>,
    pub n_old: usize,
    pub n_new: usize,
}

/// How many session samples were routed to new classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyCount {
    pub session: u32,
    /// Samples assigned a new class id.
    pub predicted_novel: usize,
    /// Samples that truly belong to this session's new classes.
    pub true_novel: usize,
    /// Samples in both sets.
    pub correct_novel: usize,
    pub total: usize,
}

impl NoveltyCount {
    pub fn precision(&self) -> f64 {
        if self.predicted_novel == 0 {
            return if self.true_novel == 0 { 1.0 } else { 0.0 };
        }
        self.correct_novel as f64 / self.predicted_novel as f64
    }

    pub fn recall(&self) -> f64 {
        if self.true_novel == 0 {
            return 1.0;
        }
        self.correct_novel as f64 / self.true_novel as f64
    }
}

/// Log-determinant series of one class fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetTrace {
    pub session: u32,
    pub class_id: u32,
    pub log_dets: Vec<f64>,
    pub ratios: Vec<Option<f64>>,
}

impl DetTrace {
    pub fn from_fit(session: u32, class_id: u32, trace: &FitTrace) -> Self {
        Self {
            session,
            class_id,
            log_dets: trace.log_det_series(),
            ratios: core::iter::once(trace.initial_ratio)
                .chain(trace.records.iter().map(|r| r.ratio))
                .collect(),
        }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Evaluation results of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub per_session: Vec<SessionMetrics>,
    pub m_f: f64,
    pub m_d: f64,
    pub novelty_detection: Vec<NoveltyCount>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub det_traces: Option<Vec<DetTrace>>,
}

impl MetricsReport {
    /// Checks the report's internal identities: accuracies in `[0, 1]`,
    /// `acc_all` equal to the count-weighted old/new accuracies and `m_d`
    /// equal to the mean online `acc_new`.
    pub fn check_consistency(&self) -> Result<()> {
        for s in &self.per_session {
            let in_unit = |v: f64| (0.0..=1.0).contains(&v);
            if !in_unit(s.acc_all)
                || s.acc_old.is_some_and(|v| !in_unit(v))
                || s.acc_new.is_some_and(|v| !in_unit(v))
            {
                return Err(Error::InvalidConfig("accuracy outside [0, 1]"));
            }
            if s.acc_old.is_none() && s.acc_new.is_none() {
                continue;
            }
            let total = (s.n_old + s.n_new) as f64;
            let weighted = s.acc_old.unwrap_or(0.0) * s.n_old as f64 + s.acc_new.unwrap_or(0.0) * s.n_new as f64;
            if total > 0.0 && (weighted / total - s.acc_all).abs() > 1e-12 {
                return Err(Error::InvalidConfig("acc_all disagrees with old/new partition"));
            }
        }
        let news: Vec<f64> = self
            .per_session
            .iter()
            .filter(|s| s.session > 0)
            .filter_map(|s| s.acc_new)
            .collect();
        if !news.is_empty() && (novelty_rate(&news)? - self.m_d).abs() > 1e-12 {
            return Err(Error::InvalidConfig("m_d disagrees with per-session acc_new"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hungarian_small_cases() {
        let a = hungarian(&[1.0, 2.0, 2.0, 1.0], 2, 2).unwrap();
        assert_eq!(a.row_to_col, vec![Some(0), Some(1)]);
        assert_eq!(a.cost, 2.0);
        let mut c = vec![5.0; 9];
        for i in 0..3 {
            c[i * 3 + i] = 0.0;
        }
        let a = hungarian(&c, 3, 3).unwrap();
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(a.cost, 0.0);
        assert_eq!(
            hungarian(&[1.0, f64::NAN], 1, 2).unwrap_err(),
            Error::NonFiniteCost { row: 0, col: 1 }
        );
    }

    #[test]
    fn hungarian_rectangular() {
        // 3 rows, 2 columns: one row stays unassigned.
        let a = hungarian(&[4.0, 1.0, 2.0, 9.0, 3.0, 3.0], 3, 2).unwrap();
        assert_eq!(a.cost, 3.0);
        assert_eq!(a.row_to_col.iter().filter(|c| c.is_some()).count(), 2);
        let a = hungarian(&[4.0, 2.0, 3.0, 1.0, 9.0, 3.0], 2, 3).unwrap();
        assert_eq!(a.cost, 3.0);
    }

    #[test]
    fn permuted_new_ids_align_perfectly() {
        let truth = vec![0, 1, 2, 2, 3, 3, 3];
        let pred = vec![0, 1, 3, 3, 2, 2, 2];
        let al = align_new_labels(&pred, &truth, 2).unwrap();
        let acc = session_accuracies(&al.apply(&pred), &truth, 2).unwrap();
        assert_eq!(acc.acc_new, Some(1.0));
        assert_eq!(acc.acc_all, 1.0);
        let al = align_new_labels(&truth, &truth, 2).unwrap();
        assert!(al.mapping.iter().all(|(&p, &t)| i64::from(p) == t));
    }

    #[test]
    fn merged_prediction_leaves_a_class_unmatched() {
        let truth = vec![2, 2, 3, 3, 3];
        let pred = vec![2, 2, 2, 2, 2];
        let al = align_new_labels(&pred, &truth, 2).unwrap();
        assert_eq!(al.map(2), 3);
        let acc = session_accuracies(&al.apply(&pred), &truth, 2).unwrap();
        assert!((acc.acc_new.unwrap() - 0.6).abs() < 1e-15);
        assert!(align_new_labels(&[1], &[], 0).is_err());
    }

    #[test]
    fn ties_prefer_lower_truth_id() {
        let al = align_new_labels(&[5, 5], &[3, 4], 2).unwrap();
        assert_eq!(al.map(5), 3);
    }

    #[test]
    fn accuracy_examples() {
        let truth = vec![0, 1, 2, 3];
        let all = session_accuracies(&[0, 1, 2, 3], &truth, 2).unwrap();
        assert_eq!((all.acc_all, all.acc_old, all.acc_new), (1.0, Some(1.0), Some(1.0)));
        let half = session_accuracies(&[0, 1, 3, 2], &truth, 2).unwrap();
        assert_eq!((half.acc_all, half.acc_old, half.acc_new), (0.5, Some(1.0), Some(0.0)));
        let s0 = session_accuracies(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(s0.acc_new, None);
    }

    #[test]
    fn rates() {
        assert!((forgetting_rate(0.90, 0.85) - 0.05).abs() < 1e-15);
        assert_eq!(forgetting_rate(0.7, 0.7), 0.0);
        assert!((novelty_rate(&[0.8, 0.6]).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(novelty_rate(&[0.42]).unwrap(), 0.42);
        assert_eq!(novelty_rate(&[]), Err(Error::EmptyList));
        // Published per-session new-class accuracies average to the reported M_d.
        let m_d = novelty_rate(&[83.10, 79.60, 75.60, 81.70, 75.70]).unwrap();
        assert!((m_d - 79.14).abs() < 1e-9);
    }
}
