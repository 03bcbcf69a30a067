//! Persistent shell sessions.
//!
//! A [`Session`] owns one long-lived shell process. Commands are written to
//! the shell's standard input one at a time, each followed by a trailer that
//! reports `$?` on a dedicated status descriptor (fd 3):
//!
//! ```text
//! command eval '<command>' <&4
//! printf 'BOA-RC %s %d\n' <nonce> $? >&3
//! ```
//!
//! Because the trailer runs in the same shell, exported variables, the
//! working directory and the umask carry over from one command to the next.
//! User commands read from fd 4, an empty pipe that never reaches end of
//! file while the session is open, so a command waiting for terminal input
//! blocks until its timeout fires. `command` keeps a syntax error in the
//! user's text from terminating the shell. Stdout and stderr are never
//! touched by the protocol.
//!
//! Commands must not read or write fds 3 and 4 themselves; doing so is
//! undefined behaviour as far as the session is concerned.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, PipeReader, PipeWriter, Read, Write};
use std::os::fd::{AsRawFd, RawFd};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStderr, ChildStdin, ChildStdout, Command, Stdio};
use std::time::{Duration, Instant};

use chrono::{DateTime, SubsecRound, Utc};
use rand::RngCore;

pub const DEFAULT_SHELL: &str = "/bin/sh";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);
const CLOSE_GRACE: Duration = Duration::from_secs(5);
const STATUS_FD: RawFd = 3;
const INPUT_FD: RawFd = 4;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("cannot start shell {program:?}: {source}")]
    SpawnFailed {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error("command timed out after {:?}", .0.finished_at - .0.started_at)]
    TimedOut(Box<ActionRecord>),
    #[error("shell exited while running command {}", .0.seq)]
    ShellDied(Box<ActionRecord>),
    #[error("session is closed")]
    SessionClosed,
    #[error("session is broken by an earlier timeout or shell exit")]
    SessionBroken,
    #[error("command contains a NUL byte")]
    InvalidCommand,
    #[error("session i/o: {0}")]
    Io(#[from] io::Error),
}

impl SessionError {
    /// The action record carried by `TimedOut` and `ShellDied`.
    pub fn record(&self) -> Option<&ActionRecord> {
        match self {
            SessionError::TimedOut(r) | SessionError::ShellDied(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Open,
    Closed,
    Broken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Completed,
    TimedOut,
    ShellDied,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Completed => "Completed",
            Outcome::TimedOut => "TimedOut",
            Outcome::ShellDied => "ShellDied",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Outcome::Completed, Outcome::TimedOut, Outcome::ShellDied]
            .into_iter()
            .find(|o| o.as_str() == s)
    }
}

/// One executed command. `exit_status` is present iff the outcome is `Completed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRecord {
    pub seq: u64,
    pub command: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub exit_status: Option<u8>,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub outcome: Outcome,
}

impl ActionRecord {
    pub fn succeeded(&self) -> bool {
        self.exit_status == Some(0)
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub shell_program: String,
    pub working_dir: PathBuf,
    pub env_overrides: BTreeMap<String, String>,
    pub default_timeout: Duration,
}

impl SessionConfig {
    pub fn new(working_dir: impl Into<PathBuf>) -> Self {
        Self {
            shell_program: DEFAULT_SHELL.to_string(),
            working_dir: working_dir.into(),
            env_overrides: BTreeMap::new(),
            default_timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn shell(mut self, program: impl Into<String>) -> Self {
        self.shell_program = program.into();
        self
    }

    pub fn env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env_overrides.insert(key.into(), value.into());
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.default_timeout = timeout;
        self
    }
}

struct Live {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: ChildStdout,
    stderr: ChildStderr,
    status: PipeReader,
    // Write end of the user-input pipe. Held open and never written so
    // reads on fd 4 block instead of seeing end of file.
    input_hold: Option<PipeWriter>,
    status_buf: Vec<u8>,
}

pub struct Session {
    config: SessionConfig,
    state: SessionState,
    actions: Vec<ActionRecord>,
    live: Option<Live>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("shell", &self.config.shell_program)
            .field("state", &self.state)
            .field("actions", &self.actions.len())
            .finish()
    }
}

impl Session {
    /// Starts the shell. Environment overrides apply before the first command.
    pub fn open(config: SessionConfig) -> Result<Self, SessionError> {
        let spawn_err = |source| SessionError::SpawnFailed {
            program: config.shell_program.clone(),
            source,
        };
        if !config.working_dir.is_dir() {
            return Err(spawn_err(io::Error::new(
                io::ErrorKind::NotFound,
                format!("working directory {} does not exist", config.working_dir.display()),
            )));
        }
        let (status_r, status_w) = io::pipe().map_err(spawn_err)?;
        let (input_r, input_w) = io::pipe().map_err(spawn_err)?;

        let status_fd = status_w.as_raw_fd();
        let input_fd = input_r.as_raw_fd();
        let mut cmd = Command::new(&config.shell_program);
        cmd.current_dir(&config.working_dir)
            .envs(&config.env_overrides)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        // SAFETY: only async-signal-safe calls (fcntl, dup2) run in the child.
        unsafe {
            cmd.pre_exec(move || install_fds(status_fd, input_fd));
        }
        let mut child = cmd.spawn().map_err(spawn_err)?;
        drop(status_w);
        drop(input_r);

        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");
        for fd in [stdout.as_raw_fd(), stderr.as_raw_fd(), status_r.as_raw_fd()] {
            set_nonblocking(fd)?;
        }
        if let Some(s) = &stdin {
            set_nonblocking(s.as_raw_fd())?;
        }
        log::debug!("opened session shell {} pid {}", config.shell_program, child.id());
        Ok(Self {
            config,
            state: SessionState::Open,
            actions: Vec::new(),
            live: Some(Live {
                child,
                stdin,
                stdout,
                stderr,
                status: status_r,
                input_hold: Some(input_w),
                status_buf: Vec::new(),
            }),
        })
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn actions(&self) -> &[ActionRecord] {
        &self.actions
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn last_action(&self) -> Option<&ActionRecord> {
        self.actions.last()
    }

    /// Runs `command` in the shell and waits for its sentinel.
    ///
    /// On timeout or shell exit the record is still appended to the log and
    /// returned inside the error; the session is then `Broken`.
    pub fn execute(&mut self, command: &str, timeout: Option<Duration>) -> Result<ActionRecord, SessionError> {
        match self.state {
            SessionState::Open => {}
            SessionState::Closed => return Err(SessionError::SessionClosed),
            SessionState::Broken => return Err(SessionError::SessionBroken),
        }
        if command.contains('\0') {
            return Err(SessionError::InvalidCommand);
        }
        let timeout = timeout.unwrap_or(self.config.default_timeout);
        let nonce = fresh_nonce();
        let script = format!(
            "command eval {} <&{INPUT_FD}\nprintf 'BOA-RC %s %d\\n' {nonce} $? >&{STATUS_FD}\n",
            shell_quote(command)
        );
        let seq = self.actions.len() as u64 + 1;
        let started_at = Utc::now().trunc_subsecs(0);
        let live = self.live.as_mut().expect("open session has a live shell");
        let run = live.run(script.as_bytes(), &nonce, timeout)?;
        let record = ActionRecord {
            seq,
            command: command.to_string(),
            started_at,
            finished_at: Utc::now().trunc_subsecs(0),
            exit_status: run.exit_status,
            stdout: run.stdout,
            stderr: run.stderr,
            outcome: run.outcome,
        };
        self.actions.push(record.clone());
        match record.outcome {
            Outcome::Completed => Ok(record),
            Outcome::TimedOut => {
                log::warn!("command {seq} timed out; session is now broken");
                self.state = SessionState::Broken;
                Err(SessionError::TimedOut(Box::new(record)))
            }
            Outcome::ShellDied => {
                log::warn!("shell died during command {seq}; session is now broken");
                self.state = SessionState::Broken;
                Err(SessionError::ShellDied(Box::new(record)))
            }
        }
    }

    /// Terminates the shell and returns the complete action log. Idempotent.
    pub fn close(&mut self) -> Vec<ActionRecord> {
        if let Some(mut live) = self.live.take() {
            live.shutdown();
        }
        self.state = SessionState::Closed;
        self.actions.clone()
    }

    pub fn write_log(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, render_session_log(&self.actions))
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.close();
    }
}

/// Free-function form of [`Session::open`].
pub fn open_session(
    shell_program: &str,
    working_dir: &Path,
    env_overrides: &BTreeMap<String, String>,
    default_timeout: Duration,
) -> Result<Session, SessionError> {
    Session::open(SessionConfig {
        shell_program: shell_program.to_string(),
        working_dir: working_dir.to_path_buf(),
        env_overrides: env_overrides.clone(),
        default_timeout,
    })
}

pub fn close_session(session: &mut Session) -> Vec<ActionRecord> {
    session.close()
}

pub fn write_session_log(session: &Session, path: &Path) -> io::Result<()> {
    session.write_log(path)
}

struct RunResult {
    exit_status: Option<u8>,
    outcome: Outcome,
    stdout: Vec<u8>,
    stderr: Vec<u8>,
}

impl Live {
    fn run(&mut self, script: &[u8], nonce: &str, timeout: Duration) -> Result<RunResult, SessionError> {
        let deadline = Instant::now() + timeout;
        let mut stdout = Vec::new();
        let mut stderr = Vec::new();
        let mut pending: &[u8] = script;
        let mut out_open = true;
        let mut err_open = true;
        let mut status_open = true;

        loop {
            if let Some(code) = take_sentinel(&mut self.status_buf, nonce) {
                // The command has exited, so everything it wrote is already
                // sitting in the pipes; one non-blocking sweep collects it.
                drain(&mut self.stdout, &mut stdout)?;
                drain(&mut self.stderr, &mut stderr)?;
                return Ok(RunResult {
                    exit_status: Some(code),
                    outcome: Outcome::Completed,
                    stdout,
                    stderr,
                });
            }

            let now = Instant::now();
            if now >= deadline {
                drain(&mut self.stdout, &mut stdout)?;
                drain(&mut self.stderr, &mut stderr)?;
                return Ok(RunResult {
                    exit_status: None,
                    outcome: Outcome::TimedOut,
                    stdout,
                    stderr,
                });
            }

            let shell_gone = !status_open || self.child.try_wait()?.is_some();
            if shell_gone {
                drain(&mut self.stdout, &mut stdout)?;
                drain(&mut self.stderr, &mut stderr)?;
                let _ = self.child.try_wait();
                return Ok(RunResult {
                    exit_status: None,
                    outcome: Outcome::ShellDied,
                    stdout,
                    stderr,
                });
            }

            let mut fds = Vec::with_capacity(4);
            let stdin_fd = self.stdin.as_ref().map(|s| s.as_raw_fd());
            if !pending.is_empty() {
                match stdin_fd {
                    Some(fd) => fds.push(pollfd(fd, libc::POLLOUT)),
                    None => pending = &[],
                }
            }
            if out_open {
                fds.push(pollfd(self.stdout.as_raw_fd(), libc::POLLIN));
            }
            if err_open {
                fds.push(pollfd(self.stderr.as_raw_fd(), libc::POLLIN));
            }
            fds.push(pollfd(self.status.as_raw_fd(), libc::POLLIN));

            let wait = (deadline - now).min(Duration::from_millis(100));
            poll(&mut fds, wait)?;

            for p in &fds {
                if p.revents == 0 {
                    continue;
                }
                if Some(p.fd) == stdin_fd && !pending.is_empty() {
                    let stdin = self.stdin.as_mut().expect("stdin present");
                    match stdin.write(pending) {
                        Ok(n) => pending = &pending[n..],
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => {}
                        // Broken pipe: the shell is gone; detected above next round.
                        Err(_) => pending = &[],
                    }
                } else if p.fd == self.stdout.as_raw_fd() {
                    out_open = read_some(&mut self.stdout, &mut stdout)?;
                } else if p.fd == self.stderr.as_raw_fd() {
                    err_open = read_some(&mut self.stderr, &mut stderr)?;
                } else if p.fd == self.status.as_raw_fd() {
                    status_open = read_some(&mut self.status, &mut self.status_buf)?;
                }
            }
        }
    }

    fn shutdown(&mut self) {
        // Releasing fd 4 lets anything blocked on terminal input see EOF.
        self.input_hold.take();
        if let Some(mut stdin) = self.stdin.take() {
            let _ = stdin.write_all(b"exit\n");
        }
        let deadline = Instant::now() + CLOSE_GRACE;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) | Err(_) => break,
                Ok(None) if Instant::now() >= deadline => {
                    let pgid = self.child.id() as libc::pid_t;
                    // SAFETY: plain kill(2) on the shell's own process group.
                    unsafe {
                        libc::kill(-pgid, libc::SIGKILL);
                    }
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    break;
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
            }
        }
    }
}

/// Finds and removes `BOA-RC <nonce> <code>` from the status buffer.
/// Complete lines with other nonces are stale and discarded.
fn take_sentinel(buf: &mut Vec<u8>, nonce: &str) -> Option<u8> {
    while let Some(nl) = buf.iter().position(|&b| b == b'\n') {
        let line: Vec<u8> = buf.drain(..=nl).collect();
        let line = String::from_utf8_lossy(&line[..line.len() - 1]).into_owned();
        match parse_sentinel(&line) {
            Some((n, code)) if n == nonce => return Some(code),
            _ => log::debug!("ignoring status line {line:?}"),
        }
    }
    None
}

/// Parses one status-pipe line: `BOA-RC <32 hex digits> <0-255>`.
pub fn parse_sentinel(line: &str) -> Option<(&str, u8)> {
    let mut parts = line.split(' ');
    if parts.next()? != "BOA-RC" {
        return None;
    }
    let nonce = parts.next()?;
    let code = parts.next()?;
    if parts.next().is_some()
        || nonce.len() != 32
        || !nonce.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
        || code.is_empty()
        || !code.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    Some((nonce, code.parse().ok()?))
}

fn fresh_nonce() -> String {
    let mut bytes = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// Single-quotes `s` for POSIX sh.
pub fn shell_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        if c == '\'' {
            out.push_str("'\\''");
        } else {
            out.push(c);
        }
    }
    out.push('\'');
    out
}

fn install_fds(status_fd: RawFd, input_fd: RawFd) -> io::Result<()> {
    // Park both descriptors above the target range first so neither dup2
    // clobbers the other's source.
    let high_status = cvt(unsafe { libc::fcntl(status_fd, libc::F_DUPFD_CLOEXEC, 10) })?;
    let high_input = cvt(unsafe { libc::fcntl(input_fd, libc::F_DUPFD_CLOEXEC, 10) })?;
    cvt(unsafe { libc::dup2(high_status, STATUS_FD) })?;
    cvt(unsafe { libc::dup2(high_input, INPUT_FD) })?;
    Ok(())
}

fn cvt(rc: libc::c_int) -> io::Result<libc::c_int> {
    if rc < 0 {
        Err(io::Error::last_os_error())
    } else {
        Ok(rc)
    }
}

fn set_nonblocking(fd: RawFd) -> io::Result<()> {
    // SAFETY: fcntl on a descriptor owned by this process.
    unsafe {
        let flags = cvt(libc::fcntl(fd, libc::F_GETFL))?;
        cvt(libc::fcntl(fd, libc::F_SETFL, flags | libc::O_NONBLOCK))?;
    }
    Ok(())
}

fn pollfd(fd: RawFd, events: libc::c_short) -> libc::pollfd {
    libc::pollfd { fd, events, revents: 0 }
}

fn poll(fds: &mut [libc::pollfd], wait: Duration) -> io::Result<()> {
    let ms = wait.as_millis().min(i32::MAX as u128) as libc::c_int;
    // SAFETY: `fds` is a valid, exclusively borrowed slice of pollfd.
    let rc = unsafe { libc::poll(fds.as_mut_ptr(), fds.len() as libc::nfds_t, ms) };
    if rc < 0 {
        let e = io::Error::last_os_error();
        if e.kind() != io::ErrorKind::Interrupted {
            return Err(e);
        }
    }
    Ok(())
}

/// Reads whatever is available. Returns false once the pipe hit end of file.
fn read_some(src: &mut impl Read, dst: &mut Vec<u8>) -> io::Result<bool> {
    let mut buf = [0u8; 64 * 1024];
    loop {
        match src.read(&mut buf) {
            Ok(0) => return Ok(false),
            Ok(n) => dst.extend_from_slice(&buf[..n]),
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => return Ok(true),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
}

fn drain(src: &mut impl Read, dst: &mut Vec<u8>) -> io::Result<()> {
    read_some(src, dst).map(|_| ())
}

/// Renders the human-readable session log.
///
/// ```text
/// # boa-session-log 1
/// == <seq> <started_at> <outcome> exit=<status|NA>
/// $ <command, newlines as \n, backslashes as \\>
/// --- stdout (<bytes>)
/// <raw bytes, plus a newline if they do not end with one>
/// ---
/// --- stderr (<bytes>)
/// ...
/// ---
/// ```
pub fn render_session_log(actions: &[ActionRecord]) -> Vec<u8> {
    let mut out = b"# boa-session-log 1\n".to_vec();
    for a in actions {
        let exit = a.exit_status.map_or_else(|| "NA".to_string(), |s| s.to_string());
        out.extend_from_slice(
            format!(
                "== {} {} {} exit={}\n$ {}\n",
                a.seq,
                a.started_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                a.outcome.as_str(),
                exit,
                escape_command(&a.command)
            )
            .as_bytes(),
        );
        for (label, bytes) in [("stdout", &a.stdout), ("stderr", &a.stderr)] {
            out.extend_from_slice(format!("--- {label} ({})\n", bytes.len()).as_bytes());
            out.extend_from_slice(bytes);
            if bytes.last().is_some_and(|&b| b != b'\n') {
                out.push(b'\n');
            }
            out.extend_from_slice(b"---\n");
        }
    }
    out
}

pub fn escape_command(command: &str) -> String {
    let mut out = String::with_capacity(command.len());
    for c in command.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_command(escaped: &str) -> String {
    let mut out = String::with_capacity(escaped.len());
    let mut chars = escaped.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open() -> Session {
        Session::open(SessionConfig::new(std::env::temp_dir()).timeout(Duration::from_secs(20))).unwrap()
    }

    #[test]
    fn fresh_session_is_open_and_empty() {
        let mut s = open();
        assert_eq!(s.state(), SessionState::Open);
        assert!(s.actions().is_empty());
        assert!(s.close().is_empty());
        assert_eq!(s.state(), SessionState::Closed);
    }

    #[test]
    fn missing_shell_fails_to_spawn() {
        let err = Session::open(SessionConfig::new("/").shell("/nonexistent/sh")).unwrap_err();
        assert!(matches!(err, SessionError::SpawnFailed { .. }));
    }

    #[test]
    fn env_overrides_visible() {
        let mut s = Session::open(SessionConfig::new("/").env("X", "1")).unwrap();
        let r = s.execute("echo $X", None).unwrap();
        assert_eq!(r.stdout, b"1\n");
    }

    #[test]
    fn true_and_exit_codes() {
        let mut s = open();
        let r = s.execute("true", None).unwrap();
        assert_eq!(r.exit_status, Some(0));
        assert!(r.stdout.is_empty());
        let r = s.execute("sh -c 'exit 3'", None).unwrap();
        assert_eq!(r.exit_status, Some(3));
        assert_eq!(r.seq, 2);
    }

    #[test]
    fn environment_persists() {
        let mut s = open();
        s.execute("export A=7", None).unwrap();
        assert_eq!(s.execute("echo $A", None).unwrap().stdout, b"7\n");
        s.execute("cd /tmp && umask 077", None).unwrap();
        assert_eq!(s.execute("pwd", None).unwrap().stdout, b"/tmp\n");
        assert_eq!(s.execute("umask", None).unwrap().stdout, b"0077\n");
    }

    #[test]
    fn stdout_and_stderr_are_separate() {
        let mut s = open();
        let r = s.execute("printf out; printf err >&2", None).unwrap();
        assert_eq!(r.stdout, b"out");
        assert_eq!(r.stderr, b"err");
    }

    #[test]
    fn quoting_and_multiline_commands() {
        let mut s = open();
        let r = s.execute("echo 'it'\"'\"'s'\nif true; then\n  echo two\nfi", None).unwrap();
        assert_eq!(r.stdout, b"it's\ntwo\n");
    }

    #[test]
    fn stdin_reader_times_out_and_breaks() {
        let mut s = open();
        let err = s.execute("cat", Some(Duration::from_millis(300))).unwrap_err();
        let record = err.record().unwrap();
        assert_eq!(record.outcome, Outcome::TimedOut);
        assert_eq!(record.exit_status, None);
        assert_eq!(s.state(), SessionState::Broken);
        assert!(matches!(s.execute("true", None), Err(SessionError::SessionBroken)));
        assert_eq!(s.close().len(), 1);
    }

    #[test]
    fn exiting_shell_is_reported() {
        let mut s = open();
        let err = s.execute("exit 5", None).unwrap_err();
        assert!(matches!(err, SessionError::ShellDied(_)));
        assert_eq!(s.state(), SessionState::Broken);
    }

    #[test]
    fn close_is_idempotent() {
        let mut s = open();
        for _ in 0..3 {
            s.execute("true", None).unwrap();
        }
        let first = s.close();
        assert_eq!(first.iter().map(|a| a.seq).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(s.close(), first);
        assert!(matches!(s.execute("true", None), Err(SessionError::SessionClosed)));
    }

    #[test]
    fn nul_rejected() {
        let mut s = open();
        assert!(matches!(s.execute("echo a\0b", None), Err(SessionError::InvalidCommand)));
        assert!(s.actions().is_empty());
    }

    #[test]
    fn sentinel_grammar() {
        let nonce = "0123456789abcdef0123456789abcdef";
        assert_eq!(parse_sentinel(&format!("BOA-RC {nonce} 255")), Some((nonce, 255)));
        assert_eq!(parse_sentinel(&format!("BOA-RC {nonce} 256")), None);
        assert_eq!(parse_sentinel("BOA-RC abc 0"), None);
        assert_eq!(parse_sentinel(&format!("BOA-RC {nonce} 0 x")), None);
        assert_eq!(fresh_nonce().len(), 32);
    }

    #[test]
    fn log_rendering() {
        assert_eq!(render_session_log(&[]), b"# boa-session-log 1\n");
        let mut s = open();
        s.execute("true", None).unwrap();
        let text = String::from_utf8(render_session_log(s.actions())).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[1].starts_with("== 1 ") && lines[1].ends_with(" Completed exit=0"));
        assert_eq!(&lines[2..], ["$ true", "--- stdout (0)", "---", "--- stderr (0)", "---"]);
    }

    #[test]
    fn command_escaping_round_trips() {
        for c in ["a\nb", "x\\ny", "\\", "plain", "tab\tand\\\\n"] {
            assert_eq!(unescape_command(&escape_command(c)), c);
            assert!(!escape_command(c).contains('\n'));
        }
    }
}
