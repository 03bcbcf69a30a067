//! `boa` command-line front end.
//!
//! Exit status: 0 success, 1 domain-level failure (failed install, build,
//! validation or analysis threshold), 2 usage error, 3 store or I/O error.

mod args;

use std::fmt::Display;
use std::fs;
use std::io::{self, IsTerminal, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use chrono::Utc;
use clap::{CommandFactory, FromArgMatches, Parser};

use args::*;
use boa_core::adapters::{AdapterConfig, PlanTarget};
use boa_core::analyzer::{diff_reports, render_html, render_text, scan, Report, RuleSet};
use boa_core::canonical::to_canonical_json;
use boa_core::validator::{validate, Divergence, Expectation, ValidationResult, ValidatorError};
use boa_core::workflow::{install_one, interactive_session, load_scenario, run_scenario, Overall, RunConfig, WorkflowError};
use boa_core::{
    Domain, InstallAddress, InstallStatus, ModelError, PlatformId, Project, ProjectKind, Requirement, Session,
    SessionConfig, StoreError, StoreHandle, Version,
};

const EXIT_FAILURE: i32 = 1;
const EXIT_USAGE: i32 = 2;
const EXIT_IO: i32 = 3;

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Display) -> Self {
        Self { code, message: message.to_string() }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::UnknownDomain(_) | StoreError::DomainExists(_) | StoreError::Model(_) => EXIT_FAILURE,
            _ => EXIT_IO,
        };
        Failure::new(code, e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::new(EXIT_FAILURE, e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::new(EXIT_IO, e)
    }
}

type CmdResult = Result<i32, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    init_logging(&cli.global);
    let color = use_color(cli.global.color);
    let mut stdout = io::stdout().lock();
    let code = match dispatch(&cli.global, cli.command, &mut stdout) {
        Ok(code) => code,
        Err(f) => {
            let _ = stdout.flush();
            let prefix = if color { "\x1b[31merror:\x1b[0m" } else { "error:" };
            eprintln!("{prefix} {}", f.message);
            f.code
        }
    };
    let _ = stdout.flush();
    ExitCode::from(code as u8)
}

fn init_logging(g: &GlobalOptions) {
    let level = match (g.quiet, g.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .parse_env("BOA_LOG")
        .init();
}

fn use_color(choice: ColorChoice) -> bool {
    match choice {
        ColorChoice::Always => true,
        ColorChoice::Never => false,
        ColorChoice::Auto => std::env::var_os("NO_COLOR").is_none() && io::stderr().is_terminal(),
    }
}

fn dispatch(g: &GlobalOptions, command: Command, out: &mut dyn Write) -> CmdResult {
    match command {
        Command::Domain(c) => domain_cmd(g, c, out),
        Command::Project(ProjectCommand::Add { domain, name, kind, origin, deps, tools }) => {
            project_add(g, &domain, &name, &kind, &origin, &deps, &tools, out)
        }
        Command::Version(VersionCommand::Add { domain, project, label, settings }) => {
            version_add(g, &domain, &project, &label, &settings, out)
        }
        Command::Install(a) => install(g, &a, false, out),
        Command::Build(a) => install(g, &a, true, out),
        Command::Analyze(a) => analyze(&a, out),
        Command::Diff(a) => diff(&a, out),
        Command::Validate(a) => validate_cmd(&a, out),
        Command::Run(a) => run(g, &a, out),
        Command::Shell(a) => shell(g, &a),
    }
}

fn open_store(g: &GlobalOptions, create: bool) -> Result<StoreHandle, Failure> {
    Ok(StoreHandle::open(&g.store, create)?.break_stale_locks(true))
}

fn session_config(working_dir: PathBuf) -> SessionConfig {
    let config = SessionConfig::new(working_dir);
    match std::env::var("BOA_SHELL") {
        Ok(shell) if !shell.is_empty() => config.shell(shell),
        _ => config,
    }
}

fn current_dir() -> Result<PathBuf, Failure> {
    Ok(std::env::current_dir()?)
}

fn load_adapters(path: Option<&Path>) -> Result<AdapterConfig, Failure> {
    match path {
        None => Ok(AdapterConfig::default()),
        Some(p) if !p.exists() => Err(Failure::new(EXIT_IO, format!("{}: no such file", p.display()))),
        Some(p) => AdapterConfig::load(p).map_err(|e| Failure::new(EXIT_USAGE, e)),
    }
}

fn parse_platform(s: &str) -> Result<PlatformId, Failure> {
    s.parse().map_err(|e: ModelError| Failure::new(EXIT_USAGE, e))
}

fn timestamp() -> String {
    Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string()
}

fn domain_cmd(g: &GlobalOptions, command: DomainCommand, out: &mut dyn Write) -> CmdResult {
    match command {
        DomainCommand::Init { name, root, platforms } => {
            let platforms = platforms.iter().map(|p| parse_platform(p)).collect::<Result<Vec<_>, _>>()?;
            let domain = Domain::new(&name, &root, platforms).map_err(|e| Failure::new(EXIT_USAGE, e))?;
            let store = open_store(g, true)?;
            store.create_domain(&domain)?;
            writeln!(out, "created domain {name} in {}", store.root().display())?;
        }
        DomainCommand::List => {
            let store = open_store(g, false)?;
            for name in store.list_domains()? {
                writeln!(out, "{name}")?;
            }
        }
        DomainCommand::Show { name, json } => {
            let store = open_store(g, false)?;
            let domain = store.load_domain(&name)?;
            if json {
                out.write_all(to_canonical_json(&domain).map_err(|e| Failure::new(EXIT_IO, e))?.as_bytes())?;
            } else {
                show_domain(&domain, out)?;
            }
        }
    }
    Ok(0)
}

fn show_domain(domain: &Domain, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "domain {}", domain.name)?;
    for (k, v) in &domain.site_settings {
        writeln!(out, "  {k} = {v}")?;
    }
    let platforms: Vec<String> = domain.platforms.iter().map(ToString::to_string).collect();
    writeln!(out, "  platforms: {}", platforms.join(" "))?;
    for p in &domain.projects {
        writeln!(out, "project {} ({}) from {}", p.name, p.kind, p.origin)?;
        if !p.dependencies.is_empty() {
            let deps: Vec<String> = p.dependencies.iter().map(ToString::to_string).collect();
            writeln!(out, "  depends on: {}", deps.join(" "))?;
        }
        for v in &p.versions {
            writeln!(out, "  version {}", v.label)?;
            for platform in &domain.platforms {
                let rec = v.installation(platform);
                write!(out, "    {platform}: {}", v.status_on(platform))?;
                if let Some(reason) = rec.and_then(|r| r.failure_reason.as_deref()) {
                    write!(out, " ({reason})")?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn project_add(
    g: &GlobalOptions,
    domain: &str,
    name: &str,
    kind: &str,
    origin: &str,
    deps: &[String],
    tools: &[String],
    out: &mut dyn Write,
) -> CmdResult {
    let kind: ProjectKind = kind.parse().map_err(|e: ModelError| Failure::new(EXIT_USAGE, e))?;
    let mut project = Project::new(name, kind, origin).map_err(|e| Failure::new(EXIT_USAGE, e))?;
    let parse_req = |s: &String| s.parse::<Requirement>().map_err(|e| Failure::new(EXIT_USAGE, e));
    for dep in deps {
        project.add_dependency(parse_req(dep)?)?;
    }
    project.required_tools = tools.iter().map(parse_req).collect::<Result<_, _>>()?;
    let store = open_store(g, false)?;
    store.modify_domain(domain, |d| {
        d.add_project(project)?;
        d.validate()?;
        Ok(())
    })?;
    writeln!(out, "added project {name} to {domain}")?;
    Ok(0)
}

fn version_add(
    g: &GlobalOptions,
    domain: &str,
    project: &str,
    label: &str,
    settings: &[String],
    out: &mut dyn Write,
) -> CmdResult {
    let mut version = Version::new(label).map_err(|e| Failure::new(EXIT_USAGE, e))?;
    for s in settings {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::new(EXIT_USAGE, format!("--set expects key=value, got {s:?}")))?;
        version = version.with_setting(k, v);
    }
    let store = open_store(g, false)?;
    store.modify_domain(domain, |d| {
        let p = d
            .project_mut(project)
            .ok_or_else(|| ModelError::UnknownProject(project.to_string()))?;
        p.add_version(version)?;
        Ok(())
    })?;
    writeln!(out, "added version {label} to {project}")?;
    Ok(0)
}

fn install(g: &GlobalOptions, a: &InstallArgs, rebuild: bool, out: &mut dyn Write) -> CmdResult {
    let platform = parse_platform(&a.platform)?;
    let adapters = load_adapters(a.adapters.as_deref())?;
    let store = open_store(g, false)?;
    let domain = store.load_domain(&a.domain)?;
    let order = if a.no_deps {
        vec![(a.project.clone(), a.version.clone())]
    } else {
        domain.resolve_install_order(&[(a.project.clone(), a.version.clone())])?
    };
    let log_path = store
        .root()
        .join("logs")
        .join(format!("install-{}-{}-{}-{}.log", a.domain, a.project, a.version, timestamp()));
    let mut session = Session::open(session_config(current_dir()?)).map_err(|e| Failure::new(EXIT_IO, e))?;
    let mut failed = false;
    for (project, version) in &order {
        let target = PlanTarget {
            domain: a.domain.clone(),
            address: InstallAddress::new(project, version, platform.clone()),
            session_log_ref: Some(log_path.display().to_string()),
            step_timeout: a.timeout.map(Duration::from_secs),
        };
        match install_one(&store, &adapters, &mut session, &target, rebuild && project == &a.project) {
            Ok(InstallStatus::Installed) => writeln!(out, "{project} {version} {platform}: Installed")?,
            Ok(status) => {
                writeln!(out, "{project} {version} {platform}: {status}")?;
                failed = true;
            }
            Err(e) => {
                writeln!(out, "{project} {version} {platform}: {e}")?;
                failed = true;
            }
        }
        if failed {
            break;
        }
    }
    session.close();
    session.write_log(&log_path)?;
    writeln!(out, "session log: {}", log_path.display())?;
    if failed {
        return Err(Failure::new(EXIT_FAILURE, format!("installing {} {} failed", a.project, a.version)));
    }
    Ok(0)
}

fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> CmdResult {
    let rules = if a.rules != boa_core::analyzer::BUILTIN_GCC && !Path::new(&a.rules).exists() {
        return Err(Failure::new(EXIT_IO, format!("{}: no such rule file", a.rules)));
    } else {
        RuleSet::load(&a.rules).map_err(|e| Failure::new(EXIT_USAGE, e))?
    };
    let (log, default_id) = if a.log == "-" {
        let mut buf = Vec::new();
        io::stdin().lock().read_to_end(&mut buf)?;
        (buf, "stdin".to_string())
    } else {
        let bytes = fs::read(&a.log).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", a.log)))?;
        let name = Path::new(&a.log)
            .file_name()
            .map_or_else(|| a.log.clone(), |n| n.to_string_lossy().into_owned());
        (bytes, name)
    };
    let report = scan(&log, &rules, a.build_id.as_deref().unwrap_or(&default_id));
    let json = report.to_json();
    if let Some(path) = &a.out {
        fs::write(path, &json).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &a.html {
        fs::write(path, render_html(&report)).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    }
    if a.json {
        out.write_all(json.as_bytes())?;
    } else {
        out.write_all(render_text(&report).as_bytes())?;
    }
    let mut exceeded = Vec::new();
    if let Some(max) = a.max_errors.filter(|&m| report.errors() > m) {
        exceeded.push(format!("{} errors exceed --max-errors {max}", report.errors()));
    }
    if let Some(max) = a.max_warnings.filter(|&m| report.warnings() > m) {
        exceeded.push(format!("{} warnings exceed --max-warnings {max}", report.warnings()));
    }
    if !exceeded.is_empty() {
        return Err(Failure::new(EXIT_FAILURE, exceeded.join("; ")));
    }
    Ok(0)
}

fn read_report(path: &Path) -> Result<Report, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    Report::from_json(&text).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn diff(a: &DiffArgs, out: &mut dyn Write) -> CmdResult {
    let old = read_report(&a.old)?;
    let new = read_report(&a.new)?;
    let d = diff_reports(&old, &new).map_err(|e| Failure::new(EXIT_USAGE, e))?;
    if a.json {
        out.write_all(d.to_json().as_bytes())?;
        return Ok(0);
    }
    writeln!(out, "new: {} fixed: {} persisting: {}", d.new.len(), d.fixed.len(), d.persisting.len())?;
    for (mark, list) in [("+", &d.new), ("-", &d.fixed)] {
        for diag in list {
            let place = match (&diag.file, diag.line) {
                (Some(f), Some(l)) => format!("{f}:{l}: "),
                (Some(f), None) => format!("{f}: "),
                _ => String::new(),
            };
            writeln!(out, "{mark} [{}] {place}{}", diag.severity, diag.message)?;
        }
    }
    Ok(0)
}

fn show_divergence(d: &Divergence, out: &mut dyn Write) -> io::Result<()> {
    let no = |n: Option<usize>| n.map_or_else(|| "-".to_string(), |n| n.to_string());
    writeln!(out, "  reference line {}: {}", no(d.reference_line_no), d.reference.as_deref().unwrap_or("<end of output>"))?;
    writeln!(out, "  actual line {}:    {}", no(d.actual_line_no), d.actual.as_deref().unwrap_or("<end of output>"))
}

fn validate_cmd(a: &ValidateArgs, out: &mut dyn Write) -> CmdResult {
    let exp = Expectation::load(&a.expectation).map_err(|e| match e {
        ValidatorError::File { .. } => Failure::new(EXIT_IO, e),
        _ => Failure::new(EXIT_USAGE, e),
    })?;
    let dir = match a.expectation.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => current_dir()?,
    };
    let mut session = Session::open(session_config(dir)).map_err(|e| Failure::new(EXIT_IO, e))?;
    let (result, actual) = validate(&exp, &mut session, a.timeout.map(Duration::from_secs))
        .map_err(|e| Failure::new(EXIT_FAILURE, e))?;
    session.close();
    match result {
        ValidationResult::Pass => {
            writeln!(out, "PASS {}", exp.name)?;
            Ok(0)
        }
        ValidationResult::CommandFailed { status } => Err(Failure::new(
            EXIT_FAILURE,
            format!(
                "FAIL {}: command exited with status {}",
                exp.name,
                status.map_or_else(|| "unknown".to_string(), |s| s.to_string())
            ),
        )),
        ValidationResult::Fail { first_divergence } => {
            writeln!(out, "FAIL {}", exp.name)?;
            if a.full_diff {
                for d in exp.diff(&actual) {
                    show_divergence(&d, out)?;
                }
            } else {
                show_divergence(&first_divergence, out)?;
            }
            Err(Failure::new(EXIT_FAILURE, format!("{} does not match its reference", exp.name)))
        }
    }
}

fn run(g: &GlobalOptions, a: &RunArgs, out: &mut dyn Write) -> CmdResult {
    let scenario = load_scenario(&a.scenario).map_err(|e| match e {
        WorkflowError::Io { .. } => Failure::new(EXIT_IO, e),
        _ => Failure::new(EXIT_USAGE, e),
    })?;
    let adapters = load_adapters(a.adapters.as_deref())?;
    let store = open_store(g, false)?;
    let mut config = RunConfig::new(
        a.runs_dir.clone().unwrap_or_else(|| store.root().to_path_buf()),
        session_config(current_dir()?),
    );
    config.adapters = adapters;
    config.step_timeout = a.timeout.map(Duration::from_secs);
    let summary = run_scenario(&scenario, &store, &config);
    if a.json {
        out.write_all(summary.to_json().as_bytes())?;
    } else {
        for s in &summary.steps {
            writeln!(out, "{:<12} {:<9} {:?} {}", s.id, s.action, s.outcome, s.detail)?;
        }
        writeln!(out, "overall: {:?}", summary.overall)?;
        writeln!(out, "run dir: {}", summary.run_dir)?;
    }
    if let Some(e) = summary.error {
        return Err(Failure::new(EXIT_IO, e));
    }
    match summary.overall {
        Overall::Success => Ok(0),
        other => Err(Failure::new(EXIT_FAILURE, format!("scenario {} finished with {other:?}", scenario.name))),
    }
}

/// Lines typed into the shell that are not built-in verbs.
#[derive(Debug, Parser)]
#[command(name = "boa", no_binary_name = true)]
struct ShellLine {
    #[command(subcommand)]
    command: Command,
}

fn shell(g: &GlobalOptions, a: &ShellArgs) -> CmdResult {
    let store = open_store(g, false)?;
    let mut config = RunConfig::new(store.root(), session_config(current_dir()?));
    config.adapters = load_adapters(a.adapters.as_deref())?;
    let mut handler = |words: &[String], out: &mut dyn Write| -> Result<(), String> {
        let matches = ShellLine::command()
            .try_get_matches_from(words)
            .and_then(|m| ShellLine::from_arg_matches(&m));
        let line = match matches {
            Ok(l) => l,
            Err(e) => {
                let _ = write!(out, "{}", e.render());
                return Ok(());
            }
        };
        if matches!(line.command, Command::Shell(_)) {
            return Err("already in a shell".to_string());
        }
        match dispatch(g, line.command, out) {
            Ok(_) => Ok(()),
            Err(f) => Err(f.message),
        }
    };
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut stdout = io::stdout();
    let (code, _) = interactive_session(&store, &a.domain, &config, &mut input, &mut stdout, Some(&mut handler))?;
    Ok(code)
}
