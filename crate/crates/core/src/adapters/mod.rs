//! Project-kind adapters: turn an install request into shell commands and
//! drive them through a session while recording installation status.

pub mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::{Domain, InstallStatus, InstallationRecord, PlatformId, Project, ProjectKind, Requirement, Version};
use crate::session::{Session, SessionError, SessionState};
use crate::store::{InstallAddress, StoreError, StoreHandle};

pub const PLACEHOLDERS: [&str; 5] = ["origin", "project", "version", "install_root", "platform"];

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("unresolved placeholder {{{placeholder}}} in template {template:?}")]
    UnresolvedPlaceholder { placeholder: String, template: String },
    #[error("missing {phase} template for {kind} projects")]
    MissingTemplate { kind: ProjectKind, phase: Phase },
    #[error("install plan is empty")]
    EmptyPlan,
    #[error("adapter config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Fetch,
    Configure,
    Build,
    Register,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Fetch => "Fetch",
            Phase::Configure => "Configure",
            Phase::Build => "Build",
            Phase::Register => "Register",
        })
    }
}

impl Phase {
    /// Status recorded once this phase has succeeded.
    pub fn completion_status(self) -> InstallStatus {
        match self {
            Phase::Fetch => InstallStatus::Fetching,
            Phase::Configure => InstallStatus::Configured,
            Phase::Build => InstallStatus::Building,
            Phase::Register => InstallStatus::Installed,
        }
    }

    pub fn for_kind(kind: ProjectKind) -> &'static [Phase] {
        match kind {
            ProjectKind::SourceBuilt => &[Phase::Fetch, Phase::Configure, Phase::Build, Phase::Register],
            ProjectKind::PackageCache => &[Phase::Fetch, Phase::Configure, Phase::Register],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindTemplates {
    #[serde(default)]
    pub preamble: Vec<String>,
    pub fetch: Option<String>,
    pub configure: Option<String>,
    pub build: Option<String>,
    pub register: Option<String>,
}

impl KindTemplates {
    pub fn template(&self, phase: Phase) -> Option<&str> {
        match phase {
            Phase::Fetch => self.fetch.as_deref(),
            Phase::Configure => self.configure.as_deref(),
            Phase::Build => self.build.as_deref(),
            Phase::Register => self.register.as_deref(),
        }
    }

    fn all(&self) -> impl Iterator<Item = &str> {
        self.preamble
            .iter()
            .map(String::as_str)
            .chain([&self.fetch, &self.configure, &self.build, &self.register].into_iter().flatten().map(String::as_str))
    }
}

/// Command templates for both project kinds.
///
/// Templates may use `{origin}`, `{project}`, `{version}`, `{install_root}`
/// and `{platform}`. `{{` and `}}` produce literal braces and `${...}` is
/// passed through to the shell untouched. Substituted values are inserted
/// verbatim; quote them in the template where needed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    #[serde(rename = "source-built", default)]
    pub source_built: KindTemplates,
    #[serde(rename = "package-cache", default)]
    pub package_cache: KindTemplates,
}

impl Default for AdapterConfig {
    /// Placeholder commands that lay out the install tree without calling
    /// any real fetch or build tool.
    fn default() -> Self {
        let dir = "'{install_root}/{project}/{version}/{platform}'";
        Self {
            source_built: KindTemplates {
                preamble: vec![],
                fetch: Some(format!("mkdir -p {dir} && echo 'fetch {{project}} {{version}} from {{origin}}'")),
                configure: Some("echo 'configure {project} {version} for {platform}'".to_string()),
                build: Some("echo 'build {project} {version} for {platform}'".to_string()),
                register: Some(format!("touch {dir}/.installed && echo 'registered {{project}} {{version}}'")),
            },
            package_cache: KindTemplates {
                preamble: vec![],
                fetch: Some(format!("mkdir -p {dir} && echo 'fetch {{project}} {{version}} from {{origin}}'")),
                configure: Some("echo 'unpack {project} {version} for {platform}'".to_string()),
                build: None,
                register: Some(format!("touch {dir}/.installed && echo 'registered {{project}} {{version}}'")),
            },
        }
    }
}

impl AdapterConfig {
    pub fn from_toml(text: &str) -> Result<Self, AdapterError> {
        let config: AdapterConfig = toml::from_str(text).map_err(|e| AdapterError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, AdapterError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AdapterError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn for_kind(&self, kind: ProjectKind) -> &KindTemplates {
        match kind {
            ProjectKind::SourceBuilt => &self.source_built,
            ProjectKind::PackageCache => &self.package_cache,
        }
    }

    /// Every placeholder must be one of the five known names.
    pub fn validate(&self) -> Result<(), AdapterError> {
        let names: BTreeMap<&str, &str> = PLACEHOLDERS.iter().map(|p| (*p, "")).collect();
        for t in self.source_built.all().chain(self.package_cache.all()) {
            substitute(t, &names)?;
        }
        Ok(())
    }
}

/// Replaces `{name}` placeholders from `values`.
pub fn substitute(template: &str, values: &BTreeMap<&str, &str>) -> Result<String, AdapterError> {
    let mut out = String::with_capacity(template.len());
    let chars: Vec<char> = template.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '{' if chars.get(i + 1) == Some(&'{') => {
                out.push('{');
                i += 2;
            }
            '}' if chars.get(i + 1) == Some(&'}') => {
                out.push('}');
                i += 2;
            }
            '$' if chars.get(i + 1) == Some(&'{') => {
                let end = chars[i..].iter().position(|&c| c == '}').map_or(chars.len(), |p| i + p + 1);
                out.extend(&chars[i..end]);
                i = end;
            }
            '{' => {
                let close = chars[i + 1..].iter().position(|&c| c == '}').map(|p| i + 1 + p);
                let name: Option<String> = close.map(|end| chars[i + 1..end].iter().collect());
                let is_ident = name.as_deref().is_some_and(|n| {
                    n.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                        && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                });
                match (close, name) {
                    (Some(end), Some(name)) if is_ident => {
                        let value = values.get(name.as_str()).ok_or_else(|| {
                            AdapterError::UnresolvedPlaceholder {
                                placeholder: name.clone(),
                                template: template.to_string(),
                            }
                        })?;
                        out.push_str(value);
                        i = end + 1;
                    }
                    _ => {
                        out.push('{');
                        i += 1;
                    }
                }
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstallPlanStep {
    pub phase: Phase,
    pub command: String,
    pub expected_status: InstallStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstallPlan {
    /// Environment set-up commands run before the first step.
    pub preamble: Vec<String>,
    pub steps: Vec<InstallPlanStep>,
    /// Tools the steps expect on the path: the project's own requirements
    /// followed by the domain's bootstrap tools. Not installed by the plan.
    pub tools: Vec<Requirement>,
}

/// Substitutes the templates for `project`'s kind into an ordered plan.
pub fn plan_install(
    project: &Project,
    version: &Version,
    platform: &PlatformId,
    domain: &Domain,
    config: &AdapterConfig,
) -> Result<InstallPlan, AdapterError> {
    let platform = platform.to_string();
    let values: BTreeMap<&str, &str> = [
        ("origin", project.origin.as_str()),
        ("project", project.name.as_str()),
        ("version", version.label.as_str()),
        ("install_root", domain.install_root()),
        ("platform", platform.as_str()),
    ]
    .into_iter()
    .collect();
    let templates = config.for_kind(project.kind);
    let preamble = templates
        .preamble
        .iter()
        .map(|t| substitute(t, &values))
        .collect::<Result<_, _>>()?;
    let steps = Phase::for_kind(project.kind)
        .iter()
        .map(|&phase| {
            let template = templates.template(phase).ok_or(AdapterError::MissingTemplate {
                kind: project.kind,
                phase,
            })?;
            Ok(InstallPlanStep {
                phase,
                command: substitute(template, &values)?,
                expected_status: phase.completion_status(),
            })
        })
        .collect::<Result<Vec<_>, AdapterError>>()?;
    let tools = project.required_tools.iter().chain(&domain.bootstrap_tools).cloned().collect();
    Ok(InstallPlan { preamble, steps, tools })
}

/// Where an executed plan records its progress.
#[derive(Debug, Clone)]
pub struct PlanTarget {
    pub domain: String,
    pub address: InstallAddress,
    pub session_log_ref: Option<String>,
    pub step_timeout: Option<Duration>,
}

/// Runs `plan` step by step in `session`, persisting each status change.
///
/// The record enters `Fetching` before anything runs. After each step exits
/// 0 the record moves to the step's expected status; the first failing step
/// moves it to `Failed` with a reason naming the phase, and nothing after it
/// runs. Session timeouts and shell death also end in `Failed`.
pub fn execute_plan(
    plan: &InstallPlan,
    session: &mut Session,
    store: &StoreHandle,
    target: &PlanTarget,
) -> Result<InstallationRecord, AdapterError> {
    if plan.steps.is_empty() {
        return Err(AdapterError::EmptyPlan);
    }
    match session.state() {
        SessionState::Open => {}
        SessionState::Closed => return Err(SessionError::SessionClosed.into()),
        SessionState::Broken => return Err(SessionError::SessionBroken.into()),
    }
    let log_ref = target.session_log_ref.as_deref();
    let update = |status: InstallStatus, detail: Option<&str>| {
        store.update_installation_with(&target.domain, &target.address, status, detail, log_ref)
    };

    let mut record = update(InstallStatus::Fetching, None)?;
    log::info!(
        "installing {} {} on {}",
        target.address.project,
        target.address.version,
        target.address.platform
    );

    for command in &plan.preamble {
        if let Some(reason) = run_step(session, command, target.step_timeout, "preamble")? {
            return Ok(update(InstallStatus::Failed, Some(&reason))?);
        }
    }
    for step in &plan.steps {
        let phase = step.phase.to_string();
        if let Some(reason) = run_step(session, &step.command, target.step_timeout, &phase)? {
            log::warn!("{reason}");
            return Ok(update(InstallStatus::Failed, Some(&reason))?);
        }
        if record.status != step.expected_status {
            record = update(step.expected_status, None)?;
        }
    }
    Ok(record)
}

/// Runs one command; `Some(reason)` describes a failure.
fn run_step(
    session: &mut Session,
    command: &str,
    timeout: Option<Duration>,
    phase: &str,
) -> Result<Option<String>, AdapterError> {
    match session.execute(command, timeout) {
        Ok(r) if r.succeeded() => Ok(None),
        Ok(r) => Ok(Some(format!(
            "{phase} step exited with status {}",
            r.exit_status.map_or_else(|| "?".to_string(), |s| s.to_string())
        ))),
        Err(SessionError::TimedOut(_)) => Ok(Some(format!("{phase} step timed out"))),
        Err(SessionError::ShellDied(_)) => Ok(Some(format!("{phase} step: shell died"))),
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain() -> Domain {
        Domain::new("cms", "/opt/sw", ["linux-2.4/gcc-3.2".parse().unwrap()]).unwrap()
    }

    fn platform() -> PlatformId {
        "linux-2.4/gcc-3.2".parse().unwrap()
    }

    #[test]
    fn package_cache_plan_has_no_build() {
        let p = Project::new("ext", ProjectKind::PackageCache, "http://cache").unwrap().with_version("1.0").unwrap();
        let plan = plan_install(&p, &p.versions[0], &platform(), &domain(), &AdapterConfig::default()).unwrap();
        let phases: Vec<_> = plan.steps.iter().map(|s| s.phase).collect();
        assert_eq!(phases, [Phase::Fetch, Phase::Configure, Phase::Register]);
        assert!(plan.steps[0].command.contains("/opt/sw/ext/1.0/linux-2.4/gcc-3.2"));
        assert!(plan.steps[0].command.contains("http://cache"));
    }

    #[test]
    fn source_built_plan_in_phase_order() {
        let p = Project::new("orca", ProjectKind::SourceBuilt, "cvs://orca").unwrap().with_version("O_7").unwrap();
        let plan = plan_install(&p, &p.versions[0], &platform(), &domain(), &AdapterConfig::default()).unwrap();
        let phases: Vec<_> = plan.steps.iter().map(|s| s.phase).collect();
        assert_eq!(phases, [Phase::Fetch, Phase::Configure, Phase::Build, Phase::Register]);
        let statuses: Vec<_> = plan.steps.iter().map(|s| s.expected_status).collect();
        assert_eq!(
            statuses,
            [InstallStatus::Fetching, InstallStatus::Configured, InstallStatus::Building, InstallStatus::Installed]
        );
    }

    #[test]
    fn tools_are_listed_not_installed() {
        use crate::model::VersionConstraint;
        let mut d = domain();
        d.bootstrap_tools.push(Requirement::new("pacman", VersionConstraint::at_least("2.0")));
        let mut p = Project::new("orca", ProjectKind::SourceBuilt, "x").unwrap().with_version("1").unwrap();
        p.required_tools.push(Requirement::new("scram", VersionConstraint::any()));
        let plan = plan_install(&p, &p.versions[0], &platform(), &d, &AdapterConfig::default()).unwrap();
        let names: Vec<_> = plan.tools.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["scram", "pacman"]);
        assert_eq!(plan.steps.len(), 4);
    }

    #[test]
    fn unknown_placeholder_rejected() {
        let mut config = AdapterConfig::default();
        config.package_cache.fetch = Some("{bogus}".into());
        let p = Project::new("ext", ProjectKind::PackageCache, "x").unwrap().with_version("1").unwrap();
        match plan_install(&p, &p.versions[0], &platform(), &domain(), &config) {
            Err(AdapterError::UnresolvedPlaceholder { placeholder, .. }) => assert_eq!(placeholder, "bogus"),
            other => panic!("{other:?}"),
        }
        assert!(config.validate().is_err());
    }

    #[test]
    fn missing_template_rejected() {
        let mut config = AdapterConfig::default();
        config.source_built.build = None;
        let p = Project::new("orca", ProjectKind::SourceBuilt, "x").unwrap().with_version("1").unwrap();
        assert!(matches!(
            plan_install(&p, &p.versions[0], &platform(), &domain(), &config),
            Err(AdapterError::MissingTemplate { phase: Phase::Build, .. })
        ));
    }

    #[test]
    fn substitution_escapes() {
        let values: BTreeMap<&str, &str> = [("project", "orca")].into_iter().collect();
        assert_eq!(substitute("a {project} b", &values).unwrap(), "a orca b");
        assert_eq!(substitute("{{project}}", &values).unwrap(), "{project}");
        assert_eq!(substitute("echo ${HOME} {a,b} {", &values).unwrap(), "echo ${HOME} {a,b} {");
        assert!(substitute("{nope}", &values).is_err());
    }

    #[test]
    fn config_toml() {
        let text = r#"
[source-built]
preamble = ["export A=1"]
fetch = "get {origin}"
configure = "conf"
build = "make"
register = "reg"

[package-cache]
fetch = "pull {origin}"
configure = "unpack"
register = "reg"
"#;
        let c = AdapterConfig::from_toml(text).unwrap();
        assert_eq!(c.source_built.preamble, ["export A=1"]);
        assert_eq!(c.package_cache.build, None);
        assert!(AdapterConfig::from_toml("[source-built]\nfetch = \"{oops}\"\n").is_err());
        assert!(AdapterConfig::from_toml("[other]\n").is_err());
    }
}
