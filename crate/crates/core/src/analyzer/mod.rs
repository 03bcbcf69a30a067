//! Build-output analysis: rule-based line classification, statistics,
//! build-to-build diffs and report rendering.

mod render;
mod rules;
pub mod session_log;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use render::{render_html, render_text};
pub use rules::{Rule, RuleSet, Severity, BUILTIN_GCC};

#[derive(Debug, thiserror::Error)]
pub enum AnalyzerError {
    #[error("rule {rule:?}: invalid pattern: {message}")]
    BadPattern { rule: String, message: String },
    #[error("duplicate rule id {0:?}")]
    DuplicateRule(String),
    #[error("rule file: {0}")]
    RuleFile(String),
    #[error("reports come from different rule sets ({old:?} vs {new:?})")]
    RuleSetMismatch { old: String, new: String },
    #[error("invalid report: {0}")]
    InvalidReport(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    pub message: String,
    pub rule_id: String,
    /// 1-based line number in the scanned log.
    pub source_line_no: u64,
}

pub type SeverityCounts = BTreeMap<Severity, u64>;

fn zero_counts() -> SeverityCounts {
    Severity::ALL.into_iter().map(|s| (s, 0)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub build_id: String,
    pub ruleset: String,
    pub counts: SeverityCounts,
    pub per_file: BTreeMap<String, SeverityCounts>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Report {
    /// Builds a report whose statistics are derived from `diagnostics`.
    pub fn from_diagnostics(build_id: &str, ruleset: &str, diagnostics: Vec<Diagnostic>) -> Self {
        let mut counts = zero_counts();
        let mut per_file: BTreeMap<String, SeverityCounts> = BTreeMap::new();
        for d in &diagnostics {
            *counts.entry(d.severity).or_default() += 1;
            if let Some(file) = &d.file {
                *per_file
                    .entry(file.clone())
                    .or_insert_with(zero_counts)
                    .entry(d.severity)
                    .or_default() += 1;
            }
        }
        Self {
            build_id: build_id.to_string(),
            ruleset: ruleset.to_string(),
            counts,
            per_file,
            diagnostics,
        }
    }

    pub fn count(&self, severity: Severity) -> u64 {
        self.counts.get(&severity).copied().unwrap_or(0)
    }

    pub fn errors(&self) -> u64 {
        self.count(Severity::Error)
    }

    pub fn warnings(&self) -> u64 {
        self.count(Severity::Warning)
    }

    /// Checks that the stored statistics agree with the diagnostics.
    pub fn validate(&self) -> Result<(), AnalyzerError> {
        let recount = Report::from_diagnostics(&self.build_id, &self.ruleset, self.diagnostics.clone());
        let normalize = |c: &SeverityCounts| -> SeverityCounts {
            let mut z = zero_counts();
            z.extend(c.iter().map(|(k, v)| (*k, *v)));
            z
        };
        if normalize(&self.counts) != recount.counts {
            return Err(AnalyzerError::InvalidReport(
                "counts differ from the diagnostics".to_string(),
            ));
        }
        let per_file: BTreeMap<_, _> = self.per_file.iter().map(|(f, c)| (f.clone(), normalize(c))).collect();
        if per_file != recount.per_file {
            return Err(AnalyzerError::InvalidReport(
                "per-file counts differ from the diagnostics".to_string(),
            ));
        }
        if let Some(d) = self.diagnostics.iter().find(|d| d.message.is_empty()) {
            return Err(AnalyzerError::InvalidReport(format!(
                "diagnostic at log line {} has an empty message",
                d.source_line_no
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, AnalyzerError> {
        let report: Report =
            serde_json::from_str(text).map_err(|e| AnalyzerError::InvalidReport(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        crate::canonical::to_canonical_json(self).expect("reports always serialize")
    }
}

/// Classifies one line; `None` when no rule matches and no default applies.
pub fn classify_line(line: &str, rules: &RuleSet, source_line_no: u64) -> Option<Diagnostic> {
    for rule in rules.rules() {
        if let Some(caps) = rule.pattern.captures(line) {
            let file = caps
                .name("file")
                .map(|m| m.as_str().to_string())
                .filter(|f| !f.is_empty());
            let line_no = caps
                .name("line")
                .and_then(|m| m.as_str().parse::<u64>().ok())
                .filter(|&n| n > 0);
            let message = caps
                .name("msg")
                .map(|m| m.as_str().trim())
                .filter(|m| !m.is_empty())
                .unwrap_or_else(|| line.trim());
            let message = if message.is_empty() { rule.id.as_str() } else { message };
            return Some(Diagnostic {
                severity: rule.severity,
                file,
                line: line_no,
                message: message.to_string(),
                rule_id: rule.id.clone(),
                source_line_no,
            });
        }
    }
    let severity = rules.default_severity?;
    let text = line.trim();
    (!text.is_empty()).then(|| Diagnostic {
        severity,
        file: None,
        line: None,
        message: text.to_string(),
        rule_id: "default".to_string(),
        source_line_no,
    })
}

/// Splits a byte log into lines, decoding each lossily and dropping a trailing `\r`.
pub fn log_lines(log: &[u8]) -> impl Iterator<Item = String> + '_ {
    let body = log.strip_suffix(b"\n").unwrap_or(log);
    let empty = log.is_empty();
    body.split(|&b| b == b'\n')
        .filter(move |_| !empty)
        .map(|l| String::from_utf8_lossy(l.strip_suffix(b"\r").unwrap_or(l)).into_owned())
}

/// Classifies every line of `log` with `rules`.
pub fn scan(log: &[u8], rules: &RuleSet, build_id: &str) -> Report {
    let diagnostics = log_lines(log)
        .enumerate()
        .filter_map(|(i, line)| classify_line(&line, rules, i as u64 + 1))
        .collect();
    Report::from_diagnostics(build_id, &rules.name, diagnostics)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDiff {
    pub new: Vec<Diagnostic>,
    pub fixed: Vec<Diagnostic>,
    pub persisting: Vec<Diagnostic>,
}

impl ReportDiff {
    pub fn to_json(&self) -> String {
        crate::canonical::to_canonical_json(self).expect("diffs always serialize")
    }
}

/// Strips digits and whitespace so drifting line numbers and counters do not
/// make an unchanged diagnostic look new.
pub fn normalize_message(message: &str) -> String {
    message
        .chars()
        .filter(|c| !c.is_ascii_digit() && !c.is_whitespace())
        .collect()
}

type DiffKey = (String, Option<String>, String);

fn diff_key(d: &Diagnostic) -> DiffKey {
    (d.rule_id.clone(), d.file.clone(), normalize_message(&d.message))
}

/// Partitions diagnostics of two builds into new, fixed and persisting.
///
/// Diagnostics match by (rule id, file, normalized message), ignoring line
/// numbers. Per key, the first `min(old, new)` occurrences of the new build
/// persist; any surplus in the new build is new and any surplus in the old
/// build is fixed.
pub fn diff_reports(old: &Report, new: &Report) -> Result<ReportDiff, AnalyzerError> {
    if old.ruleset != new.ruleset {
        return Err(AnalyzerError::RuleSetMismatch {
            old: old.ruleset.clone(),
            new: new.ruleset.clone(),
        });
    }
    let mut old_count: BTreeMap<DiffKey, usize> = BTreeMap::new();
    for d in &old.diagnostics {
        *old_count.entry(diff_key(d)).or_default() += 1;
    }
    let mut new_count: BTreeMap<DiffKey, usize> = BTreeMap::new();
    for d in &new.diagnostics {
        *new_count.entry(diff_key(d)).or_default() += 1;
    }

    let mut seen: BTreeMap<DiffKey, usize> = BTreeMap::new();
    let (mut added, mut persisting) = (Vec::new(), Vec::new());
    for d in &new.diagnostics {
        let key = diff_key(d);
        let n = seen.entry(key.clone()).or_default();
        *n += 1;
        if *n <= old_count.get(&key).copied().unwrap_or(0) {
            persisting.push(d.clone());
        } else {
            added.push(d.clone());
        }
    }

    let mut seen: BTreeMap<DiffKey, usize> = BTreeMap::new();
    let mut fixed = Vec::new();
    for d in &old.diagnostics {
        let key = diff_key(d);
        let n = seen.entry(key.clone()).or_default();
        *n += 1;
        if *n > new_count.get(&key).copied().unwrap_or(0) {
            fixed.push(d.clone());
        }
    }
    Ok(ReportDiff {
        new: added,
        fixed,
        persisting,
    })
}
