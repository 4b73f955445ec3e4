//! Metrics report output: JSON, per-session CSV, a text table and the
//! determinant-trace CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use vbcgcd_core::eval::{DetTrace, MetricsReport, REPORT_SCHEMA_VERSION};

use crate::error::{IoError, Result};

pub fn report_to_json(report: &MetricsReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn parse_report(text: &str) -> Result<MetricsReport> {
    let report: MetricsReport = serde_json::from_str(text).map_err(|e| IoError::Format {
        format: "report JSON",
        offset: 0,
        message: e.to_string(),
    })?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(IoError::Format {
            format: "report JSON",
            offset: 0,
            message: format!("unsupported schema_version {}", report.schema_version),
        });
    }
    Ok(report)
}

pub fn load_report(path: &Path) -> Result<MetricsReport> {
    parse_report(&fs::read_to_string(path).map_err(|e| IoError::io(path, e))?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// One row per session; empty cells where a value is undefined.
pub fn report_to_csv(report: &MetricsReport) -> String {
    let mut out = String::from("session,acc_all,acc_old,acc_new,predicted_novel,true_novel,total\n");
    for s in &report.per_session {
        let nd = report.novelty_detection.iter().find(|n| n.session == s.session);
        let count = |f: fn(&vbcgcd_core::eval::NoveltyCount) -> usize| nd.map(|n| f(n).to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{},{},{}",
            s.session,
            s.acc_all,
            opt(s.acc_old),
            opt(s.acc_new),
            count(|n| n.predicted_novel),
            count(|n| n.true_novel),
            count(|n| n.total),
        );
    }
    out
}

/// Human-readable summary table.
pub fn render_table(report: &MetricsReport) -> String {
    let pct = |v: Option<f64>| v.map(|v| format!("{:6.2}", 100.0 * v)).unwrap_or_else(|| "     -".into());
    let mut out = String::new();
    let _ = writeln!(out, "session    All    Old    New   novel(pred/true/total)");
    for s in &report.per_session {
        let nd = report
            .novelty_detection
            .iter()
            .find(|n| n.session == s.session)
            .map(|n| format!("{}/{}/{}", n.predicted_novel, n.true_novel, n.total))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "S{:<6} {} {} {}   {}",
            s.session,
            pct(Some(s.acc_all)),
            pct(s.acc_old),
            pct(s.acc_new),
            nd
        );
    }
    let _ = writeln!(out, "M_f {:.2}  M_d {:.2}", 100.0 * report.m_f, 100.0 * report.m_d);
    out
}

/// Long format: one row per recorded step of every class fit. The ratio
/// column is empty where no reference was available.
pub fn det_traces_to_csv(traces: &[DetTrace]) -> String {
    let mut out = String::from("session,class_id,step,log_det,ratio\n");
    for t in traces {
        for (step, (ld, r)) in t.log_dets.iter().zip(&t.ratios).enumerate() {
            let r = r.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", t.session, t.class_id, step, ld, r);
        }
    }
    out
}
