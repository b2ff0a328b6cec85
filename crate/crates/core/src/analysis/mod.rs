//! Static per-submission measurements: verbosity, AST shape, and violations
//! of a fixed style-rule subset.
//!
//! All operations are pure; identical code yields bit-identical metrics.

mod ast;
mod style;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ast::{ast_metrics, AstMetrics, ParseFailure};
pub use style::{style_check, Violation, ViolationReport};

use crate::corpus::Submission;

/// Per-submission static measurements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMetrics {
    pub char_count: usize,
    pub line_count: usize,
    /// Absent when the code does not parse.
    pub ast_depth: Option<usize>,
    pub ast_width: Option<usize>,
    pub ast_nodes: Option<usize>,
    pub violations: usize,
    pub parse_ok: bool,
}

/// Character and physical-line counts. Every character including newlines
/// counts; a trailing newline does not add a line. CRLF counts as one
/// newline; no other normalization is applied.
pub fn verbosity(code: &str) -> (usize, usize) {
    let normalized = normalize_newlines(code);
    let char_count = normalized.chars().count();
    if normalized.is_empty() {
        return (0, 0);
    }
    let mut line_count = normalized.matches('\n').count();
    if !normalized.ends_with('\n') {
        line_count += 1;
    }
    (char_count, line_count.max(1))
}

fn normalize_newlines(code: &str) -> std::borrow::Cow<'_, str> {
    if code.contains('\r') {
        std::borrow::Cow::Owned(code.replace("\r\n", "\n").replace('\r', "\n"))
    } else {
        std::borrow::Cow::Borrowed(code)
    }
}

/// Run all static measurements over one piece of code.
pub fn analyze(code: &str) -> CodeMetrics {
    let normalized = normalize_newlines(code);
    let (char_count, line_count) = verbosity(&normalized);
    let report = style_check(&normalized);
    match ast_metrics(&normalized) {
        Ok(m) => CodeMetrics {
            char_count,
            line_count,
            ast_depth: Some(m.depth),
            ast_width: Some(m.width),
            ast_nodes: Some(m.nodes),
            violations: report.len(),
            parse_ok: true,
        },
        Err(_) => CodeMetrics {
            char_count,
            line_count,
            ast_depth: None,
            ast_width: None,
            ast_nodes: None,
            violations: report.len(),
            parse_ok: false,
        },
    }
}

/// One exported metrics row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub student_id: String,
    pub problem_id: String,
    pub attempt_index: usize,
    #[serde(flatten)]
    pub metrics: CodeMetrics,
}

impl MetricsRow {
    pub fn for_submission(sub: &Submission) -> Self {
        Self {
            student_id: sub.student_id.clone(),
            problem_id: sub.problem_id.clone(),
            attempt_index: sub.attempt_index,
            metrics: analyze(&sub.code),
        }
    }
}

/// Export metric rows as CSV with one line per submission.
pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<(), std::io::Error> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "student_id",
        "problem_id",
        "attempt_index",
        "char_count",
        "line_count",
        "ast_depth",
        "ast_width",
        "ast_nodes",
        "violations",
        "parse_ok",
    ])?;
    let opt = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
    for row in rows {
        writer.write_record([
            row.student_id.clone(),
            row.problem_id.clone(),
            row.attempt_index.to_string(),
            row.metrics.char_count.to_string(),
            row.metrics.line_count.to_string(),
            opt(row.metrics.ast_depth),
            opt(row.metrics.ast_width),
            opt(row.metrics.ast_nodes),
            row.metrics.violations.to_string(),
            row.metrics.parse_ok.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
