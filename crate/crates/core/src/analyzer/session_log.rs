//! Reader for session log files.

use chrono::{DateTime, Utc};

use crate::session::{unescape_command, Outcome};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedAction {
    pub seq: u64,
    pub started_at: DateTime<Utc>,
    pub outcome: Outcome,
    pub exit_status: Option<u8>,
    pub command: String,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
#[error("session log byte {offset}: {message}")]
pub struct LogParseError {
    pub offset: usize,
    pub message: String,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, LogParseError> {
        Err(LogParseError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn line(&mut self) -> Result<&'a str, LogParseError> {
        let rest = &self.buf[self.pos..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return self.fail("unterminated line");
        };
        let line = std::str::from_utf8(&rest[..nl]).or_else(|_| self.fail("header is not UTF-8"))?;
        self.pos += nl + 1;
        Ok(line)
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], LogParseError> {
        if self.pos + n > self.buf.len() {
            return self.fail("block shorter than its declared size");
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn block(&mut self, label: &str) -> Result<Vec<u8>, LogParseError> {
        let header = self.line()?;
        let size = header
            .strip_prefix(&format!("--- {label} ("))
            .and_then(|s| s.strip_suffix(')'))
            .and_then(|s| s.parse::<usize>().ok());
        let Some(size) = size else {
            return self.fail(format!("expected {label} block header, found {header:?}"));
        };
        let data = self.bytes(size)?.to_vec();
        if data.last().is_some_and(|&b| b != b'\n') && self.bytes(1)? != b"\n" {
            return self.fail("missing newline after block");
        }
        if self.line()? != "---" {
            return self.fail(format!("unterminated {label} block"));
        }
        Ok(data)
    }
}

/// Parses a log produced by [`crate::session::render_session_log`].
pub fn parse_session_log(bytes: &[u8]) -> Result<Vec<LoggedAction>, LogParseError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.line()? != "# boa-session-log 1" {
        return cur.fail("not a session log (bad header)");
    }
    let mut actions = Vec::new();
    while !cur.done() {
        let head = cur.line()?;
        let fields: Vec<&str> = head.split(' ').collect();
        let [marker, seq, started, outcome, exit] = fields[..] else {
            return cur.fail(format!("bad action header {head:?}"));
        };
        if marker != "==" {
            return cur.fail(format!("bad action header {head:?}"));
        }
        let seq = seq.parse().or_else(|_| cur.fail("bad sequence number"))?;
        let started_at = DateTime::parse_from_rfc3339(started)
            .or_else(|_| cur.fail("bad timestamp"))?
            .with_timezone(&Utc);
        let Some(outcome) = Outcome::parse(outcome) else {
            return cur.fail(format!("unknown outcome {outcome:?}"));
        };
        let exit_status = match exit.strip_prefix("exit=") {
            Some("NA") => None,
            Some(code) => Some(code.parse().or_else(|_| cur.fail("bad exit status"))?),
            None => return cur.fail("missing exit field"),
        };
        let command_line = cur.line()?;
        let Some(command) = command_line.strip_prefix("$ ") else {
            return cur.fail("missing command line");
        };
        let command = unescape_command(command);
        let stdout = cur.block("stdout")?;
        let stderr = cur.block("stderr")?;
        actions.push(LoggedAction {
            seq,
            started_at,
            outcome,
            exit_status,
            command,
            stdout,
            stderr,
        });
    }
    Ok(actions)
}
