//! Scriptable stand-in for real fetch/build tools.
//!
//! Each phase runs a small shell script that appends a line to
//! `invocations.log`, optionally prints canned output, and exits with a
//! configurable status. The configure template also exports
//! `BOA_MOCK_CONFIGURED`, which later phases record, so tests can observe
//! that the environment survives between steps.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::{AdapterConfig, KindTemplates, Phase};

fn quote(p: &Path) -> String {
    crate::session::shell_quote(&p.to_string_lossy())
}

const PHASES: [Phase; 4] = [Phase::Fetch, Phase::Configure, Phase::Build, Phase::Register];

#[derive(Debug, Clone, Default)]
struct PhaseScript {
    exit: u8,
    // project name -> exit status overriding `exit`
    per_project: BTreeMap<String, u8>,
    stdout: String,
}

#[derive(Debug)]
pub struct MockBackend {
    dir: PathBuf,
    phases: BTreeMap<Phase, PhaseScript>,
    snapshot_source: Option<PathBuf>,
}

fn script_name(phase: Phase) -> String {
    format!("{}.sh", phase.to_string().to_lowercase())
}

impl MockBackend {
    /// Writes succeeding scripts for every phase into `dir`.
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mock = Self {
            dir,
            phases: PHASES.iter().map(|&p| (p, PhaseScript::default())).collect(),
            snapshot_source: None,
        };
        mock.write_scripts()?;
        Ok(mock)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn invocation_log(&self) -> PathBuf {
        self.dir.join("invocations.log")
    }

    /// Exit status for `phase` from now on.
    pub fn set_exit(&mut self, phase: Phase, status: u8) -> io::Result<()> {
        self.phases.entry(phase).or_default().exit = status;
        self.write_scripts()
    }

    /// Exit status for `phase` when installing `project` only.
    pub fn set_exit_for(&mut self, phase: Phase, project: &str, status: u8) -> io::Result<()> {
        self.phases
            .entry(phase)
            .or_default()
            .per_project
            .insert(project.to_string(), status);
        self.write_scripts()
    }

    /// Text printed to stdout by `phase`.
    pub fn set_output(&mut self, phase: Phase, stdout: &str) -> io::Result<()> {
        self.phases.entry(phase).or_default().stdout = stdout.to_string();
        self.write_scripts()
    }

    /// Makes every phase copy `file` (typically a stored domain document)
    /// to `snapshots/<n>-<phase>.json` before doing anything else, so tests
    /// can see what was persisted when each phase started.
    pub fn snapshot_file(&mut self, file: impl Into<PathBuf>) -> io::Result<()> {
        self.snapshot_source = Some(file.into());
        fs::create_dir_all(self.dir.join("snapshots"))?;
        self.write_scripts()
    }

    /// Snapshot files in the order they were taken.
    pub fn snapshots(&self) -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = fs::read_dir(self.dir.join("snapshots"))
            .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        files.sort();
        files
    }

    /// Lines of the invocation log, e.g. `Build orca O_7 linux-2.4/gcc-3.2 env=orca-O_7`.
    pub fn invocations(&self) -> Vec<String> {
        fs::read_to_string(self.invocation_log())
            .map(|t| t.lines().map(str::to_string).collect())
            .unwrap_or_default()
    }

    pub fn clear_invocations(&self) -> io::Result<()> {
        match fs::remove_file(self.invocation_log()) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }

    fn write_scripts(&self) -> io::Result<()> {
        let log = self.invocation_log();
        for (phase, spec) in &self.phases {
            let mut body = format!(
                "#!/bin/sh\necho \"{phase} $* env=${{BOA_MOCK_CONFIGURED:-}}\" >> {}\n",
                crate::session::shell_quote(&log.to_string_lossy())
            );
            if let Some(src) = &self.snapshot_source {
                let snaps = self.dir.join("snapshots");
                body.push_str(&format!(
                    "n=$(ls {snaps} | wc -l)\ncp {} {snaps}/$(printf '%03d' $n)-{phase}.json\n",
                    quote(src),
                    snaps = quote(&snaps),
                ));
            }
            if !spec.stdout.is_empty() {
                body.push_str(&format!("printf '%s' {}\n", crate::session::shell_quote(&spec.stdout)));
            }
            body.push_str("case \"$1\" in\n");
            for (project, status) in &spec.per_project {
                body.push_str(&format!("  {}) exit {status} ;;\n", crate::session::shell_quote(project)));
            }
            body.push_str(&format!("  *) exit {} ;;\nesac\n", spec.exit));
            fs::write(self.dir.join(script_name(*phase)), body)?;
        }
        Ok(())
    }

    /// Adapter templates that call the mock scripts.
    pub fn config(&self) -> AdapterConfig {
        let call = |phase: Phase| {
            let script = crate::session::shell_quote(&self.dir.join(script_name(phase)).to_string_lossy());
            let run = format!("sh {script} {{project}} {{version}} {{platform}}");
            if phase == Phase::Configure {
                format!("export BOA_MOCK_CONFIGURED={{project}}-{{version}} && {run}")
            } else {
                run
            }
        };
        let templates = |with_build: bool| KindTemplates {
            preamble: vec![],
            fetch: Some(call(Phase::Fetch)),
            configure: Some(call(Phase::Configure)),
            build: with_build.then(|| call(Phase::Build)),
            register: Some(call(Phase::Register)),
        };
        AdapterConfig {
            source_built: templates(true),
            package_cache: templates(false),
        }
    }
}
