use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AnalyzerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
    Note,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::Error, Severity::Warning, Severity::Info, Severity::Note];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
            Severity::Note => "note",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Severity::ALL
            .into_iter()
            .find(|sev| sev.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown severity {s:?}"))
    }
}

/// A classification rule. The pattern may name captures `file`, `line` and `msg`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub id: String,
    pub pattern: Regex,
    pub severity: Severity,
}

impl Rule {
    pub fn new(id: &str, pattern: &str, severity: Severity) -> Result<Self, AnalyzerError> {
        let pattern = Regex::new(pattern).map_err(|e| AnalyzerError::BadPattern {
            rule: id.to_string(),
            message: e.to_string(),
        })?;
        Ok(Self {
            id: id.to_string(),
            pattern,
            severity,
        })
    }
}

/// Ordered rules; the first rule matching a line classifies it.
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub name: String,
    rules: Vec<Rule>,
    /// Severity for lines no rule matches. `None` drops such lines.
    pub default_severity: Option<Severity>,
}

pub const BUILTIN_GCC: &str = "gcc-classic";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    name: Option<String>,
    default_severity: Option<String>,
    #[serde(default)]
    rule: Vec<RuleEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    id: String,
    pattern: String,
    severity: String,
}

impl RuleSet {
    pub fn new(name: &str, rules: Vec<Rule>) -> Result<Self, AnalyzerError> {
        let mut seen = BTreeSet::new();
        for r in &rules {
            if !seen.insert(r.id.as_str()) {
                return Err(AnalyzerError::DuplicateRule(r.id.clone()));
            }
        }
        Ok(Self {
            name: name.to_string(),
            rules,
            default_severity: None,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// The classic gcc/ld rule set.
    pub fn gcc_classic() -> Self {
        let rules = vec![
            Rule::new(
                "gcc-error",
                r"^(?P<file>[^:\s]+):(?P<line>\d+):(?:\d+:)? error:\s*(?P<msg>.*)",
                Severity::Error,
            ),
            Rule::new(
                "gcc-warning",
                r"^(?P<file>[^:\s]+):(?P<line>\d+):(?:\d+:)? warning:\s*(?P<msg>.*)",
                Severity::Warning,
            ),
            Rule::new("ld-undefined", r"^.*\bundefined reference to\b", Severity::Error),
        ];
        let rules = rules.into_iter().collect::<Result<Vec<_>, _>>().expect("builtin patterns compile");
        Self::new(BUILTIN_GCC, rules).expect("builtin ids are unique")
    }

    /// Parses a TOML rule file with `[[rule]]` tables (id, pattern, severity).
    pub fn from_toml(text: &str, fallback_name: &str) -> Result<Self, AnalyzerError> {
        let file: RuleFile = toml::from_str(text).map_err(|e| AnalyzerError::RuleFile(e.to_string()))?;
        let rules = file
            .rule
            .iter()
            .map(|r| {
                let severity = r.severity.parse().map_err(AnalyzerError::RuleFile)?;
                Rule::new(&r.id, &r.pattern, severity)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut set = Self::new(file.name.as_deref().unwrap_or(fallback_name), rules)?;
        if let Some(sev) = file.default_severity {
            set.default_severity = Some(sev.parse().map_err(AnalyzerError::RuleFile)?);
        }
        Ok(set)
    }

    /// Resolves `gcc-classic` or a path to a rule file.
    pub fn load(reference: &str) -> Result<Self, AnalyzerError> {
        if reference == BUILTIN_GCC {
            return Ok(Self::gcc_classic());
        }
        let path = Path::new(reference);
        let text = std::fs::read_to_string(path)
            .map_err(|e| AnalyzerError::RuleFile(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("rules");
        Self::from_toml(&text, stem)
    }
}
