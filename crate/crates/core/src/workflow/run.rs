use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::Utc;
use serde::Serialize;

use super::scenario::{Action, Branch, Scenario, Step};
use crate::adapters::{execute_plan, plan_install, AdapterConfig, PlanTarget};
use crate::analyzer::{scan, RuleSet};
use crate::canonical::to_canonical_json;
use crate::model::{InstallStatus, PlatformId};
use crate::session::{render_session_log, Session, SessionConfig, SessionState};
use crate::store::{InstallAddress, StoreHandle};
use crate::validator::{validate, Expectation, ValidationResult};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub adapters: AdapterConfig,
    /// Parent of the `runs/` directory.
    pub run_root: PathBuf,
    pub session: SessionConfig,
    pub step_timeout: Option<Duration>,
}

impl RunConfig {
    pub fn new(run_root: impl Into<PathBuf>, session: SessionConfig) -> Self {
        Self {
            adapters: AdapterConfig::default(),
            run_root: run_root.into(),
            session,
            step_timeout: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepOutcome {
    Success,
    Failure,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Overall {
    Success,
    Failure,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub id: String,
    pub action: String,
    /// 1-based visit number; 0 for skipped steps.
    pub visit: u32,
    pub outcome: StepOutcome,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub domain: String,
    pub overall: Overall,
    /// Executed steps in order, then unvisited steps as `Skipped`.
    pub steps: Vec<StepRecord>,
    pub run_dir: String,
    pub session_logs: Vec<String>,
    pub reports: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        to_canonical_json(self).expect("summaries always serialize")
    }

    /// Ids of the steps that actually ran, in order.
    pub fn executed(&self) -> Vec<&str> {
        self.steps
            .iter()
            .filter(|s| s.outcome != StepOutcome::Skipped)
            .map(|s| s.id.as_str())
            .collect()
    }
}

struct StepResult {
    success: bool,
    detail: String,
}

impl StepResult {
    fn ok(detail: impl Into<String>) -> Self {
        Self { success: true, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self { success: false, detail: detail.into() }
    }
}

struct Runner<'a> {
    scenario: &'a Scenario,
    store: &'a StoreHandle,
    config: &'a RunConfig,
    run_dir: PathBuf,
    reports: Vec<String>,
    session_logs: Vec<String>,
}

fn unique_run_dir(root: &Path, scenario: &str) -> std::io::Result<PathBuf> {
    let stamp = Utc::now().format("%Y%m%dT%H%M%SZ");
    let runs = root.join("runs");
    fs::create_dir_all(&runs)?;
    let mut n = 1;
    loop {
        let name = if n == 1 {
            format!("{scenario}-{stamp}")
        } else {
            format!("{scenario}-{stamp}-{n}")
        };
        let dir = runs.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Executes `scenario` without manual intervention.
///
/// Steps share one session unless they ask for a fresh one. Failures never
/// escape as errors; they show up as step outcomes and the overall result.
/// The summary, session logs and analysis reports land in
/// `<run_root>/runs/<scenario>-<timestamp>/`.
pub fn run_scenario(scenario: &Scenario, store: &StoreHandle, config: &RunConfig) -> RunSummary {
    let mut summary = RunSummary {
        scenario: scenario.name.clone(),
        domain: scenario.domain.clone(),
        overall: Overall::Aborted,
        steps: Vec::new(),
        run_dir: String::new(),
        session_logs: Vec::new(),
        reports: Vec::new(),
        error: None,
    };
    let run_dir = match unique_run_dir(&config.run_root, &scenario.name) {
        Ok(d) => d,
        Err(e) => {
            summary.error = Some(format!("cannot create run directory: {e}"));
            return summary;
        }
    };
    summary.run_dir = run_dir.display().to_string();

    let mut runner = Runner {
        scenario,
        store,
        config,
        run_dir: run_dir.clone(),
        reports: Vec::new(),
        session_logs: Vec::new(),
    };
    if let Err(e) = store.load_domain(&scenario.domain) {
        summary.error = Some(e.to_string());
    } else {
        match Session::open(config.session.clone()) {
            Ok(mut session) => {
                let (overall, steps) = runner.drive(&mut session);
                summary.overall = overall;
                summary.steps = steps;
                session.close();
                runner.write_session_log(&session, "session.log");
            }
            Err(e) => summary.error = Some(e.to_string()),
        }
    }
    summary.session_logs = runner.session_logs;
    summary.reports = runner.reports;
    if let Err(e) = fs::write(run_dir.join("summary.json"), summary.to_json()) {
        log::error!("cannot write summary: {e}");
    }
    summary
}

impl Runner<'_> {
    fn write_session_log(&mut self, session: &Session, name: &str) {
        let path = self.run_dir.join(name);
        match session.write_log(&path) {
            Ok(()) => self.session_logs.push(path.display().to_string()),
            Err(e) => log::error!("cannot write {}: {e}", path.display()),
        }
    }

    fn drive(&mut self, session: &mut Session) -> (Overall, Vec<StepRecord>) {
        let steps = &self.scenario.steps;
        let mut visits = vec![0u32; steps.len()];
        let mut last_success: BTreeMap<usize, bool> = BTreeMap::new();
        let mut records = Vec::new();
        let mut current = Some(0);
        let mut overall = None;

        while let Some(i) = current {
            let step = &steps[i];
            if visits[i] >= step.visit_limit() {
                log::warn!("step {} exhausted its {} visits", step.id, step.visit_limit());
                overall = Some(Overall::Failure);
                break;
            }
            visits[i] += 1;

            let (result, broken) = if step.fresh_session {
                match Session::open(self.config.session.clone()) {
                    Ok(mut fresh) => {
                        let r = self.run_step(step, &mut fresh);
                        let broken = fresh.state() == SessionState::Broken;
                        fresh.close();
                        self.write_session_log(&fresh, &format!("session-{}-{}.log", step.id, visits[i]));
                        (r, broken)
                    }
                    Err(e) => (StepResult::fail(e.to_string()), true),
                }
            } else {
                let r = self.run_step(step, session);
                (r, session.state() == SessionState::Broken)
            };
            log::info!(
                "step {} ({}) {}: {}",
                step.id,
                step.action.kind(),
                if result.success { "succeeded" } else { "failed" },
                result.detail
            );
            records.push(StepRecord {
                id: step.id.clone(),
                action: step.action.kind().to_string(),
                visit: visits[i],
                outcome: if result.success { StepOutcome::Success } else { StepOutcome::Failure },
                detail: result.detail,
            });
            last_success.insert(i, result.success);

            if broken {
                overall = Some(Overall::Aborted);
                break;
            }
            let branch = if result.success { &step.on_success } else { &step.on_failure };
            if *branch == Branch::Abort {
                overall = Some(Overall::Aborted);
                break;
            }
            current = self.scenario.target(i, branch);
        }

        let overall = overall.unwrap_or_else(|| {
            if last_success.values().all(|&ok| ok) {
                Overall::Success
            } else {
                Overall::Failure
            }
        });
        for (i, s) in steps.iter().enumerate() {
            if visits[i] == 0 {
                records.push(StepRecord {
                    id: s.id.clone(),
                    action: s.action.kind().to_string(),
                    visit: 0,
                    outcome: StepOutcome::Skipped,
                    detail: String::new(),
                });
            }
        }
        (overall, records)
    }

    fn timeout(&self, step: &Step) -> Option<Duration> {
        step.timeout_secs.map(Duration::from_secs).or(self.config.step_timeout)
    }

    fn resolve(&self, reference: &str) -> PathBuf {
        self.scenario.base_dir.join(reference)
    }

    fn run_step(&mut self, step: &Step, session: &mut Session) -> StepResult {
        match &step.action {
            Action::RunCommand { command } => match session.execute(command, self.timeout(step)) {
                Ok(r) => {
                    let status = r.exit_status.unwrap_or(0);
                    if r.succeeded() {
                        StepResult::ok("exit=0")
                    } else {
                        StepResult::fail(format!("exit={status}"))
                    }
                }
                Err(e) => StepResult::fail(e.to_string()),
            },
            Action::Install { project, version, platform } => {
                self.install(step, session, project, version, platform, false)
            }
            Action::Build { project, version, platform } => {
                self.install(step, session, project, version, platform, true)
            }
            Action::Analyze { log, rules, max_errors, max_warnings } => {
                let text = match log.as_str() {
                    "@last" => session
                        .last_action()
                        .map(|a| [a.stdout.as_slice(), a.stderr.as_slice()].concat())
                        .unwrap_or_default(),
                    "@session" => render_session_log(session.actions()),
                    path => match fs::read(self.resolve(path)) {
                        Ok(b) => b,
                        Err(e) => return StepResult::fail(format!("cannot read log {path}: {e}")),
                    },
                };
                let rules_ref = if rules.as_str() == crate::analyzer::BUILTIN_GCC {
                    rules.clone()
                } else {
                    self.resolve(rules).display().to_string()
                };
                let rules = match RuleSet::load(&rules_ref) {
                    Ok(r) => r,
                    Err(e) => return StepResult::fail(e.to_string()),
                };
                let report = scan(&text, &rules, &format!("{}/{}", self.scenario.name, step.id));
                let n = self.reports.len() + 1;
                let path = self.run_dir.join(format!("report-{}-{n}.json", step.id));
                match fs::write(&path, report.to_json()) {
                    Ok(()) => self.reports.push(path.display().to_string()),
                    Err(e) => log::error!("cannot write {}: {e}", path.display()),
                }
                let detail = format!("errors={} warnings={}", report.errors(), report.warnings());
                if report.errors() <= *max_errors && report.warnings() <= *max_warnings {
                    StepResult::ok(detail)
                } else {
                    StepResult::fail(detail)
                }
            }
            Action::Validate { expectation } => {
                let exp = match Expectation::load(&self.resolve(expectation)) {
                    Ok(e) => e,
                    Err(e) => return StepResult::fail(e.to_string()),
                };
                match validate(&exp, session, self.timeout(step)) {
                    Ok((ValidationResult::Pass, _)) => StepResult::ok("pass"),
                    Ok((ValidationResult::CommandFailed { status }, _)) => StepResult::fail(format!(
                        "command failed exit={}",
                        status.map_or_else(|| "NA".to_string(), |s| s.to_string())
                    )),
                    Ok((ValidationResult::Fail { first_divergence: d }, _)) => StepResult::fail(format!(
                        "diverged at reference line {} / actual line {}",
                        d.reference_line_no.map_or_else(|| "-".to_string(), |n| n.to_string()),
                        d.actual_line_no.map_or_else(|| "-".to_string(), |n| n.to_string()),
                    )),
                    Err(e) => StepResult::fail(e.to_string()),
                }
            }
        }
    }

    fn install(
        &mut self,
        step: &Step,
        session: &mut Session,
        project: &str,
        version: &str,
        platform: &PlatformId,
        rebuild: bool,
    ) -> StepResult {
        let domain_name = &self.scenario.domain;
        let address = InstallAddress::new(project, version, platform.clone());
        let target = PlanTarget {
            domain: domain_name.clone(),
            address: address.clone(),
            session_log_ref: Some(self.run_dir.join("session.log").display().to_string()),
            step_timeout: self.timeout(step),
        };
        match install_one(self.store, &self.config.adapters, session, &target, rebuild) {
            Ok(status) if status == InstallStatus::Installed => StepResult::ok("status=Installed"),
            Ok(status) => StepResult::fail(format!("status={status}")),
            Err(e) => StepResult::fail(e),
        }
    }
}

/// Installs (or with `rebuild`, reinstalls) one project version.
///
/// An already installed version is left alone unless rebuilding, in which
/// case it is first marked `Removed`. A record stuck mid-install by an
/// interrupted run is marked `Failed` so the attempt can restart.
pub fn install_one(
    store: &StoreHandle,
    adapters: &AdapterConfig,
    session: &mut Session,
    target: &PlanTarget,
    rebuild: bool,
) -> Result<InstallStatus, String> {
    let address = &target.address;
    let domain = store.load_domain(&target.domain).map_err(|e| e.to_string())?;
    let project = domain
        .project(&address.project)
        .ok_or_else(|| format!("unknown project {:?}", address.project))?;
    let version = project
        .version(&address.version)
        .ok_or_else(|| format!("unknown version {:?} of {}", address.version, project.name))?;
    if !domain.platforms.contains(&address.platform) {
        return Err(format!("platform {} is not part of domain {}", address.platform, domain.name));
    }
    let update = |status, detail| {
        store
            .update_installation(&target.domain, address, status, detail)
            .map_err(|e| e.to_string())
    };
    match version.status_on(&address.platform) {
        InstallStatus::Installed if !rebuild => return Ok(InstallStatus::Installed),
        InstallStatus::Installed => {
            update(InstallStatus::Removed, None)?;
        }
        InstallStatus::Fetching | InstallStatus::Configured | InstallStatus::Building => {
            update(InstallStatus::Failed, Some("previous attempt was interrupted"))?;
        }
        InstallStatus::NotInstalled | InstallStatus::Failed | InstallStatus::Removed => {}
    }
    let plan = plan_install(project, version, &address.platform, &domain, adapters).map_err(|e| e.to_string())?;
    let record = execute_plan(&plan, session, store, target).map_err(|e| e.to_string())?;
    Ok(record.status)
}
