use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Deserialize;

use super::WorkflowError;
use crate::model::{is_valid_token, PlatformId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Install { project: String, version: String, platform: PlatformId },
    Build { project: String, version: String, platform: PlatformId },
    RunCommand { command: String },
    Analyze { log: String, rules: String, max_errors: u64, max_warnings: u64 },
    Validate { expectation: String },
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Install { .. } => "install",
            Action::Build { .. } => "build",
            Action::RunCommand { .. } => "run",
            Action::Analyze { .. } => "analyze",
            Action::Validate { .. } => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Branch {
    Next,
    Stop,
    Abort,
    Step(String),
}

impl Branch {
    fn parse(s: &str) -> Self {
        match s {
            "next" => Branch::Next,
            "stop" => Branch::Stop,
            "abort" => Branch::Abort,
            id => Branch::Step(id.to_string()),
        }
    }
}

const RESERVED: [&str; 3] = ["next", "stop", "abort"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub id: String,
    pub action: Action,
    pub on_success: Branch,
    pub on_failure: Branch,
    /// Explicitly configured visit bound, if any.
    pub max_visits: Option<u32>,
    pub fresh_session: bool,
    pub timeout_secs: Option<u64>,
}

impl Step {
    pub fn visit_limit(&self) -> u32 {
        self.max_visits.unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub domain: String,
    pub steps: Vec<Step>,
    /// Directory that relative log, rule and expectation paths resolve against.
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    domain: String,
    #[serde(default)]
    step: Vec<StepEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepEntry {
    id: String,
    action: String,
    project: Option<String>,
    version: Option<String>,
    platform: Option<String>,
    command: Option<String>,
    log: Option<String>,
    rules: Option<String>,
    max_errors: Option<u64>,
    max_warnings: Option<u64>,
    expectation: Option<String>,
    on_success: Option<String>,
    on_failure: Option<String>,
    max_visits: Option<u32>,
    #[serde(default)]
    fresh_session: bool,
    timeout: Option<u64>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, col)
}

impl StepEntry {
    fn into_step(self) -> Result<Step, WorkflowError> {
        let id = self.id;
        let invalid = |message: String| WorkflowError::InvalidStep { id: id.clone(), message };
        let need = |field: Option<String>, name: &str| {
            field.ok_or_else(|| invalid(format!("action {:?} requires `{name}`", self.action)))
        };
        let platform = |p: Option<String>| -> Result<PlatformId, WorkflowError> {
            need(p, "platform")?.parse().map_err(|e| invalid(format!("{e}")))
        };
        let action = match self.action.as_str() {
            "install" => Action::Install {
                project: need(self.project, "project")?,
                version: need(self.version, "version")?,
                platform: platform(self.platform)?,
            },
            "build" => Action::Build {
                project: need(self.project, "project")?,
                version: need(self.version, "version")?,
                platform: platform(self.platform)?,
            },
            "run" => Action::RunCommand {
                command: need(self.command, "command")?,
            },
            "analyze" => Action::Analyze {
                log: self.log.unwrap_or_else(|| "@last".to_string()),
                rules: self.rules.unwrap_or_else(|| crate::analyzer::BUILTIN_GCC.to_string()),
                max_errors: self.max_errors.unwrap_or(0),
                max_warnings: self.max_warnings.unwrap_or(u64::MAX),
            },
            "validate" => Action::Validate {
                expectation: need(self.expectation, "expectation")?,
            },
            other => return Err(invalid(format!("unknown action {other:?}"))),
        };
        let on_success = Branch::parse(self.on_success.as_deref().unwrap_or("next"));
        if on_success == Branch::Abort {
            return Err(invalid("on_success cannot be abort".to_string()));
        }
        let on_failure = Branch::parse(self.on_failure.as_deref().unwrap_or("abort"));
        if self.max_visits == Some(0) {
            return Err(invalid("max_visits must be at least 1".to_string()));
        }
        Ok(Step {
            id,
            action,
            on_success,
            on_failure,
            max_visits: self.max_visits,
            fresh_session: self.fresh_session,
            timeout_secs: self.timeout,
        })
    }
}

impl Scenario {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, WorkflowError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            WorkflowError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        let steps = file
            .step
            .into_iter()
            .map(StepEntry::into_step)
            .collect::<Result<Vec<_>, _>>()?;
        let scenario = Scenario {
            name: file.name,
            domain: file.domain,
            steps,
            base_dir: base_dir.to_path_buf(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.steps.iter().position(|s| s.id == id)
    }

    /// Index of the step a branch leads to from step `from`; `None` ends the run.
    pub fn target(&self, from: usize, branch: &Branch) -> Option<usize> {
        match branch {
            Branch::Next => (from + 1 < self.steps.len()).then_some(from + 1),
            Branch::Stop | Branch::Abort => None,
            Branch::Step(id) => self.index_of(id),
        }
    }

    fn validate(&self) -> Result<(), WorkflowError> {
        if !is_valid_token(&self.name) {
            return Err(WorkflowError::InvalidScenario(format!("invalid scenario name {:?}", self.name)));
        }
        if self.steps.is_empty() {
            return Err(WorkflowError::InvalidScenario("scenario has no steps".to_string()));
        }
        let mut seen = BTreeMap::new();
        for (i, s) in self.steps.iter().enumerate() {
            if !is_valid_token(&s.id) || RESERVED.contains(&s.id.as_str()) {
                return Err(WorkflowError::InvalidStep {
                    id: s.id.clone(),
                    message: "step ids must be tokens other than next/stop/abort".to_string(),
                });
            }
            if seen.insert(s.id.as_str(), i).is_some() {
                return Err(WorkflowError::DuplicateStep(s.id.clone()));
            }
        }
        for s in &self.steps {
            for b in [&s.on_success, &s.on_failure] {
                if let Branch::Step(id) = b {
                    if !seen.contains_key(id.as_str()) {
                        return Err(WorkflowError::UnresolvedStepRef(id.clone()));
                    }
                }
            }
        }

        let mut graph = DiGraph::<usize, ()>::new();
        let nodes: Vec<_> = (0..self.steps.len()).map(|i| graph.add_node(i)).collect();
        for (i, s) in self.steps.iter().enumerate() {
            for b in [&s.on_success, &s.on_failure] {
                if let Some(j) = self.target(i, b) {
                    graph.update_edge(nodes[i], nodes[j], ());
                }
            }
        }
        for scc in tarjan_scc(&graph) {
            let cyclic = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
            if !cyclic {
                continue;
            }
            let bounded = scc.iter().any(|n| self.steps[graph[*n]].max_visits.is_some());
            if !bounded {
                let mut members: Vec<_> = scc.iter().map(|n| graph[*n]).collect();
                members.sort_unstable();
                return Err(WorkflowError::CycleWithoutRetryBound(
                    members.into_iter().map(|i| self.steps[i].id.clone()).collect(),
                ));
            }
        }
        Ok(())
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, WorkflowError> {
    let text = std::fs::read_to_string(path).map_err(|e| WorkflowError::Io {
        context: path.display().to_string(),
        source: e,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    Scenario::from_toml(&text, base)
}
