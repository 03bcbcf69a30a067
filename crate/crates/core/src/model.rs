//! Persistent object model: domains, platforms, projects, versions and
//! per-platform installation records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Site setting holding the absolute install root of a domain.
pub const INSTALL_ROOT_KEY: &str = "install_root";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid name {0:?}: expected characters from [A-Za-z0-9._+-]")]
    InvalidName(String),
    #[error("invalid platform {0:?}: expected os_name-os_version/compiler")]
    InvalidPlatform(String),
    #[error("domain needs at least one platform")]
    EmptyPlatformSet,
    #[error("install root {0:?} is not an absolute path")]
    RelativeInstallRoot(String),
    #[error("project {0:?} already exists in the domain")]
    DuplicateProject(String),
    #[error("version {version:?} already exists in project {project:?}")]
    DuplicateVersion { project: String, version: String },
    #[error("project {0:?} depends on itself")]
    SelfDependency(String),
    #[error("unknown project {0:?}")]
    UnknownProject(String),
    #[error("unknown version {version:?} of project {project:?}")]
    UnknownVersion { project: String, version: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    DependencyCycle(Vec<String>),
    #[error("no version of {project:?} satisfies {constraints} (available: {})", .available.join(", "))]
    UnsatisfiableConstraint {
        project: String,
        constraints: String,
        available: Vec<String>,
    },
    #[error("illegal installation transition {from} -> {to}")]
    IllegalTransition { from: InstallStatus, to: InstallStatus },
    #[error("invalid version constraint {0:?}")]
    InvalidConstraint(String),
    #[error("{0}")]
    Invariant(String),
}

fn is_token_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '+' | '-')
}

pub fn is_valid_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_token_char)
}

fn check_token(s: &str) -> Result<(), ModelError> {
    if is_valid_token(s) {
        Ok(())
    } else {
        Err(ModelError::InvalidName(s.to_string()))
    }
}

/// Build target identified by operating system, its version and compiler.
///
/// The canonical form is `os_name-os_version/compiler`. The os name may not
/// contain a dash; the first dash separates it from the os version.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlatformId {
    os_name: String,
    os_version: String,
    compiler: String,
}

impl PlatformId {
    pub fn new(os_name: &str, os_version: &str, compiler: &str) -> Result<Self, ModelError> {
        let display = format!("{os_name}-{os_version}/{compiler}");
        let ok = is_valid_token(os_name)
            && !os_name.contains('-')
            && is_valid_token(os_version)
            && is_valid_token(compiler);
        if !ok {
            return Err(ModelError::InvalidPlatform(display));
        }
        Ok(Self {
            os_name: os_name.to_string(),
            os_version: os_version.to_string(),
            compiler: compiler.to_string(),
        })
    }

    pub fn os_name(&self) -> &str {
        &self.os_name
    }

    pub fn os_version(&self) -> &str {
        &self.os_version
    }

    pub fn compiler(&self) -> &str {
        &self.compiler
    }
}

impl fmt::Display for PlatformId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}/{}", self.os_name, self.os_version, self.compiler)
    }
}

impl FromStr for PlatformId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidPlatform(s.to_string());
        let (os, compiler) = s.split_once('/').ok_or_else(bad)?;
        let (name, version) = os.split_once('-').ok_or_else(bad)?;
        Self::new(name, version, compiler).map_err(|_| bad())
    }
}

impl Serialize for PlatformId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PlatformId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectKind {
    /// Fetched from a source repository, configured and built locally.
    SourceBuilt,
    /// Unpacked from a prebuilt package cache; no build phase.
    PackageCache,
}

impl fmt::Display for ProjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectKind::SourceBuilt => "source-built",
            ProjectKind::PackageCache => "package-cache",
        })
    }
}

impl FromStr for ProjectKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source-built" => Ok(ProjectKind::SourceBuilt),
            "package-cache" => Ok(ProjectKind::PackageCache),
            other => Err(ModelError::Invariant(format!(
                "unknown project kind {other:?} (expected source-built or package-cache)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintOp {
    Exact,
    AtLeast,
    Any,
}

/// Requirement on a version label. `AtLeast` compares positions in the
/// project's ordered version list, not label text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VersionConstraint {
    pub op: ConstraintOp,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

impl VersionConstraint {
    pub fn any() -> Self {
        Self {
            op: ConstraintOp::Any,
            label: String::new(),
        }
    }

    pub fn exact(label: &str) -> Self {
        Self {
            op: ConstraintOp::Exact,
            label: label.to_string(),
        }
    }

    pub fn at_least(label: &str) -> Self {
        Self {
            op: ConstraintOp::AtLeast,
            label: label.to_string(),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match self.op {
            ConstraintOp::Any if self.label.is_empty() => Ok(()),
            ConstraintOp::Any => Err(ModelError::InvalidConstraint(self.to_string())),
            _ if is_valid_token(&self.label) => Ok(()),
            _ => Err(ModelError::InvalidConstraint(self.to_string())),
        }
    }

    /// Whether the version at `index` of `labels` satisfies the constraint.
    pub fn accepts(&self, labels: &[&str], index: usize) -> bool {
        match self.op {
            ConstraintOp::Any => true,
            ConstraintOp::Exact => labels[index] == self.label,
            ConstraintOp::AtLeast => labels
                .iter()
                .position(|l| *l == self.label)
                .is_some_and(|floor| index >= floor),
        }
    }
}

impl fmt::Display for VersionConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            ConstraintOp::Any => f.write_str("*"),
            ConstraintOp::Exact => write!(f, "={}", self.label),
            ConstraintOp::AtLeast => write!(f, ">={}", self.label),
        }
    }
}

impl FromStr for VersionConstraint {
    type Err = ModelError;

    /// `*` or empty for any version, `=LABEL` for an exact match, `>=LABEL`
    /// for a positional lower bound.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let c = if s.is_empty() || s == "*" {
            Self::any()
        } else if let Some(label) = s.strip_prefix(">=") {
            Self::at_least(label)
        } else if let Some(label) = s.strip_prefix('=') {
            Self::exact(label)
        } else {
            return Err(ModelError::InvalidConstraint(s.to_string()));
        };
        c.validate()?;
        Ok(c)
    }
}

/// A named requirement on another project or an external tool.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Requirement {
    pub name: String,
    pub constraint: VersionConstraint,
}

impl Requirement {
    pub fn new(name: &str, constraint: VersionConstraint) -> Self {
        Self {
            name: name.to_string(),
            constraint,
        }
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constraint.op {
            ConstraintOp::Any => f.write_str(&self.name),
            _ => write!(f, "{}{}", self.name, self.constraint),
        }
    }
}

impl FromStr for Requirement {
    type Err = ModelError;

    /// `name`, `name=LABEL` or `name>=LABEL`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let split = s.find(['=', '>']).unwrap_or(s.len());
        let (name, constraint) = s.split_at(split);
        check_token(name)?;
        Ok(Self::new(name, constraint.parse()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstallStatus {
    NotInstalled,
    Fetching,
    Configured,
    Building,
    Installed,
    Failed,
    Removed,
}

impl InstallStatus {
    pub const ALL: [InstallStatus; 7] = [
        InstallStatus::NotInstalled,
        InstallStatus::Fetching,
        InstallStatus::Configured,
        InstallStatus::Building,
        InstallStatus::Installed,
        InstallStatus::Failed,
        InstallStatus::Removed,
    ];

    pub fn can_transition_to(self, to: InstallStatus) -> bool {
        use InstallStatus::*;
        matches!(
            (self, to),
            (NotInstalled, Fetching)
                | (Fetching, Configured | Failed)
                | (Configured, Building | Installed | Failed)
                | (Building, Installed | Failed)
                | (Failed, Fetching)
                | (Installed, Removed)
                | (Removed, Fetching)
        )
    }

    fn starts_attempt(self) -> bool {
        self == InstallStatus::Fetching
    }

    fn is_terminal(self) -> bool {
        matches!(
            self,
            InstallStatus::Installed | InstallStatus::Failed | InstallStatus::Removed
        )
    }
}

impl fmt::Display for InstallStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InstallStatus::NotInstalled => "NotInstalled",
            InstallStatus::Fetching => "Fetching",
            InstallStatus::Configured => "Configured",
            InstallStatus::Building => "Building",
            InstallStatus::Installed => "Installed",
            InstallStatus::Failed => "Failed",
            InstallStatus::Removed => "Removed",
        };
        f.write_str(s)
    }
}

impl FromStr for InstallStatus {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InstallStatus::ALL
            .into_iter()
            .find(|st| st.to_string().eq_ignore_ascii_case(s) || kebab(*st) == s)
            .ok_or_else(|| ModelError::Invariant(format!("unknown install status {s:?}")))
    }
}

fn kebab(status: InstallStatus) -> String {
    serde_json::to_value(status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallationRecord {
    pub platform: PlatformId,
    pub status: InstallStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_log_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

impl InstallationRecord {
    pub fn new(platform: PlatformId) -> Self {
        Self {
            platform,
            status: InstallStatus::NotInstalled,
            started_at: None,
            finished_at: None,
            session_log_ref: None,
            failure_reason: None,
        }
    }

    /// Applies a status change, stamping timestamps at second resolution.
    /// `detail` becomes the failure reason when entering `Failed`.
    pub fn transition(&self, to: InstallStatus, detail: Option<&str>) -> Result<Self, ModelError> {
        self.transition_at(to, detail, Utc::now())
    }

    pub fn transition_at(
        &self,
        to: InstallStatus,
        detail: Option<&str>,
        now: DateTime<Utc>,
    ) -> Result<Self, ModelError> {
        if !self.status.can_transition_to(to) {
            return Err(ModelError::IllegalTransition {
                from: self.status,
                to,
            });
        }
        let now = now.trunc_subsecs(0);
        let mut next = self.clone();
        next.status = to;
        if to.starts_attempt() {
            next.started_at = Some(now);
            next.finished_at = None;
        }
        if to.is_terminal() {
            next.finished_at = Some(now);
        }
        next.failure_reason = if to == InstallStatus::Failed {
            let reason = detail.filter(|d| !d.trim().is_empty()).unwrap_or("unspecified failure");
            Some(reason.to_string())
        } else {
            None
        };
        Ok(next)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let failed = self.status == InstallStatus::Failed;
        let has_reason = self.failure_reason.as_deref().is_some_and(|r| !r.is_empty());
        if failed != has_reason {
            return Err(ModelError::Invariant(format!(
                "installation on {}: failure_reason must be present iff status is Failed",
                self.platform
            )));
        }
        Ok(())
    }
}

/// Free-function form of [`InstallationRecord::transition`].
pub fn transition(
    record: &InstallationRecord,
    new_status: InstallStatus,
) -> Result<InstallationRecord, ModelError> {
    record.transition(new_status, None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Version {
    pub label: String,
    #[serde(default)]
    pub configuration: BTreeMap<String, String>,
    #[serde(default)]
    pub installations: BTreeMap<PlatformId, InstallationRecord>,
}

impl Version {
    pub fn new(label: &str) -> Result<Self, ModelError> {
        check_token(label)?;
        Ok(Self {
            label: label.to_string(),
            configuration: BTreeMap::new(),
            installations: BTreeMap::new(),
        })
    }

    pub fn with_setting(mut self, key: &str, value: &str) -> Self {
        self.configuration.insert(key.to_string(), value.to_string());
        self
    }

    pub fn installation(&self, platform: &PlatformId) -> Option<&InstallationRecord> {
        self.installations.get(platform)
    }

    pub fn status_on(&self, platform: &PlatformId) -> InstallStatus {
        self.installation(platform)
            .map_or(InstallStatus::NotInstalled, |r| r.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub name: String,
    pub kind: ProjectKind,
    pub origin: String,
    #[serde(default)]
    pub versions: Vec<Version>,
    #[serde(default)]
    pub dependencies: Vec<Requirement>,
    #[serde(default)]
    pub required_tools: Vec<Requirement>,
}

impl Project {
    pub fn new(name: &str, kind: ProjectKind, origin: &str) -> Result<Self, ModelError> {
        check_token(name)?;
        Ok(Self {
            name: name.to_string(),
            kind,
            origin: origin.to_string(),
            versions: Vec::new(),
            dependencies: Vec::new(),
            required_tools: Vec::new(),
        })
    }

    pub fn add_version(&mut self, version: Version) -> Result<(), ModelError> {
        if self.version(&version.label).is_some() {
            return Err(ModelError::DuplicateVersion {
                project: self.name.clone(),
                version: version.label,
            });
        }
        self.versions.push(version);
        Ok(())
    }

    pub fn with_version(mut self, label: &str) -> Result<Self, ModelError> {
        self.add_version(Version::new(label)?)?;
        Ok(self)
    }

    pub fn add_dependency(&mut self, dep: Requirement) -> Result<(), ModelError> {
        if dep.name == self.name {
            return Err(ModelError::SelfDependency(self.name.clone()));
        }
        self.dependencies.push(dep);
        Ok(())
    }

    pub fn with_dependency(mut self, name: &str, constraint: VersionConstraint) -> Result<Self, ModelError> {
        self.add_dependency(Requirement::new(name, constraint))?;
        Ok(self)
    }

    pub fn version(&self, label: &str) -> Option<&Version> {
        self.versions.iter().find(|v| v.label == label)
    }

    pub fn version_mut(&mut self, label: &str) -> Option<&mut Version> {
        self.versions.iter_mut().find(|v| v.label == label)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.versions.iter().map(|v| v.label.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_token(&self.name)?;
        let mut seen = BTreeSet::new();
        for v in &self.versions {
            check_token(&v.label)?;
            if !seen.insert(v.label.as_str()) {
                return Err(ModelError::DuplicateVersion {
                    project: self.name.clone(),
                    version: v.label.clone(),
                });
            }
            for (platform, record) in &v.installations {
                if &record.platform != platform {
                    return Err(ModelError::Invariant(format!(
                        "{} {}: installation keyed by {platform} records platform {}",
                        self.name, v.label, record.platform
                    )));
                }
                record.validate()?;
            }
        }
        for dep in self.dependencies.iter().chain(&self.required_tools) {
            check_token(&dep.name)?;
            dep.constraint.validate()?;
        }
        if self.dependencies.iter().any(|d| d.name == self.name) {
            return Err(ModelError::SelfDependency(self.name.clone()));
        }
        Ok(())
    }
}

/// Site-level root: settings, supported platforms, projects and the
/// bootstrap tools the site needs before anything else can be installed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub site_settings: BTreeMap<String, String>,
    pub platforms: BTreeSet<PlatformId>,
    #[serde(default)]
    pub projects: Vec<Project>,
    #[serde(default)]
    pub bootstrap_tools: Vec<Requirement>,
}

impl Domain {
    pub fn new(
        name: &str,
        install_root: &str,
        platforms: impl IntoIterator<Item = PlatformId>,
    ) -> Result<Self, ModelError> {
        check_token(name)?;
        if !Path::new(install_root).is_absolute() {
            return Err(ModelError::RelativeInstallRoot(install_root.to_string()));
        }
        let platforms: BTreeSet<_> = platforms.into_iter().collect();
        if platforms.is_empty() {
            return Err(ModelError::EmptyPlatformSet);
        }
        let mut site_settings = BTreeMap::new();
        site_settings.insert(INSTALL_ROOT_KEY.to_string(), install_root.to_string());
        Ok(Self {
            name: name.to_string(),
            site_settings,
            platforms,
            projects: Vec::new(),
            bootstrap_tools: Vec::new(),
        })
    }

    pub fn install_root(&self) -> &str {
        self.site_settings
            .get(INSTALL_ROOT_KEY)
            .map(String::as_str)
            .unwrap_or_default()
    }

    pub fn project_names(&self) -> Vec<&str> {
        self.projects.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn project(&self, name: &str) -> Option<&Project> {
        self.projects.iter().find(|p| p.name == name)
    }

    pub fn project_mut(&mut self, name: &str) -> Option<&mut Project> {
        self.projects.iter_mut().find(|p| p.name == name)
    }

    pub fn add_project(&mut self, project: Project) -> Result<(), ModelError> {
        if self.project(&project.name).is_some() {
            return Err(ModelError::DuplicateProject(project.name));
        }
        project.validate()?;
        self.projects.push(project);
        Ok(())
    }

    pub fn with_project(mut self, project: Project) -> Result<Self, ModelError> {
        self.add_project(project)?;
        Ok(self)
    }

    /// Checks every structural invariant; used when decoding stored domains.
    pub fn validate(&self) -> Result<(), ModelError> {
        check_token(&self.name)?;
        match self.site_settings.get(INSTALL_ROOT_KEY) {
            None => {
                return Err(ModelError::Invariant(
                    "site_settings lacks install_root".to_string(),
                ))
            }
            Some(root) if !Path::new(root).is_absolute() => {
                return Err(ModelError::RelativeInstallRoot(root.clone()))
            }
            Some(_) => {}
        }
        if self.platforms.is_empty() {
            return Err(ModelError::EmptyPlatformSet);
        }
        let mut seen = BTreeSet::new();
        for p in &self.projects {
            if !seen.insert(p.name.as_str()) {
                return Err(ModelError::DuplicateProject(p.name.clone()));
            }
            p.validate()?;
        }
        for tool in &self.bootstrap_tools {
            check_token(&tool.name)?;
            tool.constraint.validate()?;
        }
        Ok(())
    }

    /// Topological install plan for `targets` and their dependency closure.
    ///
    /// Every project appears after all of its dependencies. Each project gets
    /// the newest version (last in its list) that satisfies every constraint
    /// placed on it; targets pin their own version exactly. Ready projects are
    /// emitted in domain project order.
    pub fn resolve_install_order(
        &self,
        targets: &[(String, String)],
    ) -> Result<Vec<(String, String)>, ModelError> {
        let index_of = |name: &str| {
            self.projects
                .iter()
                .position(|p| p.name == name)
                .ok_or_else(|| ModelError::UnknownProject(name.to_string()))
        };

        // constraints[i] = (who imposed it, constraint)
        let mut constraints: BTreeMap<usize, Vec<(String, VersionConstraint)>> = BTreeMap::new();
        let mut stack = Vec::new();
        for (name, label) in targets {
            let i = index_of(name)?;
            if self.projects[i].version(label).is_none() {
                return Err(ModelError::UnknownVersion {
                    project: name.clone(),
                    version: label.clone(),
                });
            }
            constraints
                .entry(i)
                .or_default()
                .push(("target".to_string(), VersionConstraint::exact(label)));
            stack.push(i);
        }

        let mut closure = BTreeSet::new();
        while let Some(i) = stack.pop() {
            if !closure.insert(i) {
                continue;
            }
            for dep in &self.projects[i].dependencies {
                let j = index_of(&dep.name)?;
                constraints
                    .entry(j)
                    .or_default()
                    .push((self.projects[i].name.clone(), dep.constraint.clone()));
                stack.push(j);
            }
        }

        if let Some(cycle) = self.find_cycle(&closure) {
            return Err(ModelError::DependencyCycle(cycle));
        }

        let mut selected = BTreeMap::new();
        for &i in &closure {
            let project = &self.projects[i];
            let labels = project.labels();
            let wanted = &constraints[&i];
            let pick = (0..labels.len())
                .rev()
                .find(|&v| wanted.iter().all(|(_, c)| c.accepts(&labels, v)));
            match pick {
                Some(v) => {
                    selected.insert(i, labels[v].to_string());
                }
                None => {
                    let constraints = wanted
                        .iter()
                        .map(|(by, c)| format!("{c} (from {by})"))
                        .collect::<Vec<_>>()
                        .join(", ");
                    return Err(ModelError::UnsatisfiableConstraint {
                        project: project.name.clone(),
                        constraints,
                        available: labels.iter().map(|l| l.to_string()).collect(),
                    });
                }
            }
        }

        // Kahn's algorithm; the ready set is scanned in project-list order.
        let mut pending: BTreeMap<usize, usize> = closure
            .iter()
            .map(|&i| {
                let deps: BTreeSet<usize> = self.projects[i]
                    .dependencies
                    .iter()
                    .filter_map(|d| index_of(&d.name).ok())
                    .collect();
                (i, deps.len())
            })
            .collect();
        let mut order = Vec::with_capacity(closure.len());
        while !pending.is_empty() {
            let next = pending
                .iter()
                .find(|(_, &n)| n == 0)
                .map(|(&i, _)| i)
                .expect("acyclic closure always has a ready project");
            pending.remove(&next);
            let name = &self.projects[next].name;
            for (&i, n) in pending.iter_mut() {
                let depends = self.projects[i]
                    .dependencies
                    .iter()
                    .map(|d| &d.name)
                    .collect::<BTreeSet<_>>()
                    .contains(name);
                if depends {
                    *n -= 1;
                }
            }
            order.push((name.clone(), selected[&next].clone()));
        }
        Ok(order)
    }

    fn find_cycle(&self, closure: &BTreeSet<usize>) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut marks = vec![Mark::New; self.projects.len()];
        let mut path: Vec<usize> = Vec::new();

        fn visit(
            domain: &Domain,
            i: usize,
            marks: &mut [Mark],
            path: &mut Vec<usize>,
        ) -> Option<Vec<String>> {
            marks[i] = Mark::Active;
            path.push(i);
            for dep in &domain.projects[i].dependencies {
                let Some(j) = domain.projects.iter().position(|p| p.name == dep.name) else {
                    continue;
                };
                match marks[j] {
                    Mark::Active => {
                        let start = path.iter().position(|&p| p == j).unwrap_or(0);
                        return Some(
                            path[start..]
                                .iter()
                                .map(|&p| domain.projects[p].name.clone())
                                .collect(),
                        );
                    }
                    Mark::New => {
                        if let Some(c) = visit(domain, j, marks, path) {
                            return Some(c);
                        }
                    }
                    Mark::Done => {}
                }
            }
            path.pop();
            marks[i] = Mark::Done;
            None
        }

        for &i in closure {
            if marks[i] == Mark::New {
                if let Some(c) = visit(self, i, &mut marks, &mut path) {
                    return Some(c);
                }
            }
        }
        None
    }
}

/// Free-function form of [`Domain::new`].
pub fn new_domain(
    name: &str,
    install_root: &str,
    platforms: impl IntoIterator<Item = PlatformId>,
) -> Result<Domain, ModelError> {
    Domain::new(name, install_root, platforms)
}

/// Returns `domain` with `project` appended.
pub fn add_project(mut domain: Domain, project: Project) -> Result<Domain, ModelError> {
    domain.add_project(project)?;
    Ok(domain)
}
