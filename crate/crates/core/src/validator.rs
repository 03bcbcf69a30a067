//! Golden-output validation: run a command and compare its output with a
//! stored reference, optionally with numeric tolerance.

use std::path::{Path, PathBuf};
use std::time::Duration;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::session::{Session, SessionError};

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_ABS_TOL: f64 = 1e-12;

static NUMBER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$").expect("number grammar"));

#[derive(Debug, thiserror::Error)]
pub enum ValidatorError {
    #[error("expectation {name:?}: invalid ignore pattern {pattern:?}: {message}")]
    BadIgnorePattern { name: String, pattern: String, message: String },
    #[error("expectation {name:?}: tolerances must be non-negative")]
    NegativeTolerance { name: String },
    #[error("expectation file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone)]
pub struct Expectation {
    pub name: String,
    pub command: String,
    pub reference: String,
    pub ignore: Vec<Regex>,
    pub numeric: bool,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectationFile {
    name: String,
    command: String,
    reference_file: PathBuf,
    #[serde(default)]
    ignore: Vec<String>,
    #[serde(default)]
    numeric: bool,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
}

impl Expectation {
    pub fn new(name: &str, command: &str, reference: &str) -> Self {
        Self {
            name: name.to_string(),
            command: command.to_string(),
            reference: reference.to_string(),
            ignore: Vec::new(),
            numeric: false,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
        }
    }

    pub fn with_ignore(mut self, patterns: &[&str]) -> Result<Self, ValidatorError> {
        for p in patterns {
            self.ignore.push(Regex::new(p).map_err(|e| ValidatorError::BadIgnorePattern {
                name: self.name.clone(),
                pattern: p.to_string(),
                message: e.to_string(),
            })?);
        }
        Ok(self)
    }

    pub fn numeric(mut self, rel_tol: f64, abs_tol: f64) -> Result<Self, ValidatorError> {
        if rel_tol.is_nan() || abs_tol.is_nan() || rel_tol < 0.0 || abs_tol < 0.0 {
            return Err(ValidatorError::NegativeTolerance { name: self.name });
        }
        self.numeric = true;
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        Ok(self)
    }

    /// Loads a TOML expectation; `reference_file` is relative to the file.
    pub fn load(path: &Path) -> Result<Self, ValidatorError> {
        let err = |message: String| ValidatorError::File {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let file: ExpectationFile = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let reference_path = base.join(&file.reference_file);
        let reference = std::fs::read_to_string(&reference_path)
            .map_err(|e| err(format!("reference {}: {e}", reference_path.display())))?;
        let patterns: Vec<&str> = file.ignore.iter().map(String::as_str).collect();
        let mut exp = Expectation::new(&file.name, &file.command, &reference).with_ignore(&patterns)?;
        if file.numeric {
            exp = exp.numeric(
                file.rel_tol.unwrap_or(DEFAULT_REL_TOL),
                file.abs_tol.unwrap_or(DEFAULT_ABS_TOL),
            )?;
        } else if file.rel_tol.is_some_and(|t| t < 0.0) || file.abs_tol.is_some_and(|t| t < 0.0) {
            return Err(ValidatorError::NegativeTolerance { name: file.name });
        }
        Ok(exp)
    }
}

/// One line-level mismatch. Line numbers are 1-based positions in the
/// unfiltered text; `None` means that side ran out of lines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub reference_line_no: Option<usize>,
    pub actual_line_no: Option<usize>,
    pub reference: Option<String>,
    pub actual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum ValidationResult {
    Pass,
    Fail { first_divergence: Divergence },
    CommandFailed { status: Option<u8> },
}

impl ValidationResult {
    pub fn passed(&self) -> bool {
        matches!(self, ValidationResult::Pass)
    }
}

pub fn is_number(token: &str) -> bool {
    NUMBER.is_match(token)
}

/// `|actual - reference| <= abs_tol + rel_tol * |reference|`
pub fn within_tolerance(actual: f64, reference: f64, rel_tol: f64, abs_tol: f64) -> bool {
    (actual - reference).abs() <= abs_tol + rel_tol * reference.abs()
}

#[derive(Debug, Clone, Copy)]
pub struct Comparison {
    pub numeric: bool,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Comparison {
    pub fn exact() -> Self {
        Self {
            numeric: false,
            rel_tol: 0.0,
            abs_tol: 0.0,
        }
    }

    fn lines_match(&self, reference: &str, actual: &str) -> bool {
        if !self.numeric {
            return reference == actual;
        }
        let r: Vec<&str> = reference.split_whitespace().collect();
        let a: Vec<&str> = actual.split_whitespace().collect();
        r.len() == a.len()
            && r.iter().zip(&a).all(|(r, a)| {
                if is_number(r) && is_number(a) {
                    match (r.parse::<f64>(), a.parse::<f64>()) {
                        (Ok(r), Ok(a)) => within_tolerance(a, r, self.rel_tol, self.abs_tol),
                        _ => r == a,
                    }
                } else {
                    r == a
                }
            })
    }
}

fn surviving<'a>(text: &'a str, ignore: &[Regex]) -> Vec<(usize, &'a str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !ignore.iter().any(|re| re.is_match(l)))
        .map(|(i, l)| (i + 1, l))
        .collect()
}

/// All divergences between the filtered texts, in order.
pub fn compare_all(reference: &str, actual: &str, ignore: &[Regex], cmp: Comparison) -> Vec<Divergence> {
    let r = surviving(reference, ignore);
    let a = surviving(actual, ignore);
    let mut out = Vec::new();
    for i in 0..r.len().max(a.len()) {
        let (rl, al) = (r.get(i), a.get(i));
        let same = match (rl, al) {
            (Some((_, rl)), Some((_, al))) => cmp.lines_match(rl, al),
            _ => false,
        };
        if !same {
            out.push(Divergence {
                reference_line_no: rl.map(|x| x.0),
                actual_line_no: al.map(|x| x.0),
                reference: rl.map(|x| x.1.to_string()),
                actual: al.map(|x| x.1.to_string()),
            });
        }
    }
    out
}

pub fn first_divergence(reference: &str, actual: &str, ignore: &[Regex], cmp: Comparison) -> Option<Divergence> {
    compare_all(reference, actual, ignore, cmp).into_iter().next()
}

impl Expectation {
    pub fn comparison(&self) -> Comparison {
        Comparison {
            numeric: self.numeric,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
        }
    }

    /// Compares `actual` output against the reference.
    pub fn check(&self, actual: &str) -> ValidationResult {
        match first_divergence(&self.reference, actual, &self.ignore, self.comparison()) {
            None => ValidationResult::Pass,
            Some(first_divergence) => ValidationResult::Fail { first_divergence },
        }
    }

    pub fn diff(&self, actual: &str) -> Vec<Divergence> {
        compare_all(&self.reference, actual, &self.ignore, self.comparison())
    }
}

/// Runs the expectation's command in `session` and checks its stdout.
pub fn validate(
    expectation: &Expectation,
    session: &mut Session,
    timeout: Option<Duration>,
) -> Result<(ValidationResult, String), ValidatorError> {
    let record = match session.execute(&expectation.command, timeout) {
        Ok(r) => r,
        Err(SessionError::TimedOut(_)) | Err(SessionError::ShellDied(_)) => {
            return Ok((ValidationResult::CommandFailed { status: None }, String::new()))
        }
        Err(e) => return Err(e.into()),
    };
    let actual = String::from_utf8_lossy(&record.stdout).into_owned();
    if !record.succeeded() {
        return Ok((ValidationResult::CommandFailed { status: record.exit_status }, actual));
    }
    Ok((expectation.check(&actual), actual))
}
