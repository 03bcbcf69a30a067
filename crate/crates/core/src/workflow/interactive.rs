use std::io::{BufRead, Write};
use std::path::PathBuf;

use chrono::Utc;

use super::run::RunConfig;
use crate::session::{render_session_log, Session};
use crate::store::StoreHandle;

/// Handles verbs the loop does not know itself (the CLI's subcommands).
/// Receives the split words of the line; an `Err` is printed and the loop goes on.
pub type VerbHandler<'a> = dyn FnMut(&[String], &mut dyn Write) -> Result<(), String> + 'a;

const HELP: &str = "\
exec <command>   run a command in the live session
status           show installation status of the domain
log              print the session log so far
help             this text
quit             close the session and exit
Any other line is handled as a boa subcommand (e.g. `domain show cms`).
";

/// Read-eval loop over one live session and the shared store.
///
/// Ends on `quit`, `exit` or end of input; the session log is then written
/// under `<store>/logs/` and 0 is returned. Per-line errors never end the loop.
pub fn interactive_session(
    store: &StoreHandle,
    domain_name: &str,
    config: &RunConfig,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    fallback: Option<&mut VerbHandler<'_>>,
) -> std::io::Result<(i32, PathBuf)> {
    let mut fallback = fallback;
    if let Err(e) = store.load_domain(domain_name) {
        writeln!(output, "warning: {e}")?;
    }
    let mut session = match Session::open(config.session.clone()) {
        Ok(s) => s,
        Err(e) => {
            writeln!(output, "error: {e}")?;
            return Ok((3, PathBuf::new()));
        }
    };
    let mut line = String::new();
    loop {
        write!(output, "boa> ")?;
        output.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            writeln!(output)?;
            break;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (verb, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
        let rest = rest.trim();
        match verb {
            "quit" | "exit" => break,
            "help" => write!(output, "{HELP}")?,
            "exec" => {
                if rest.is_empty() {
                    writeln!(output, "error: exec needs a command")?;
                    continue;
                }
                match session.execute(rest, config.step_timeout) {
                    Ok(r) => {
                        output.write_all(&r.stdout)?;
                        output.write_all(&r.stderr)?;
                        if !r.succeeded() {
                            writeln!(output, "exit={}", r.exit_status.unwrap_or(0))?;
                        }
                    }
                    Err(e) => writeln!(output, "error: {e}")?,
                }
            }
            "status" => match store.load_domain(domain_name) {
                Ok(domain) => {
                    for p in &domain.projects {
                        for v in &p.versions {
                            if v.installations.is_empty() {
                                writeln!(output, "{} {}: NotInstalled", p.name, v.label)?;
                            }
                            for (platform, r) in &v.installations {
                                writeln!(output, "{} {} {platform}: {}", p.name, v.label, r.status)?;
                            }
                        }
                    }
                }
                Err(e) => writeln!(output, "error: {e}")?,
            },
            "log" => output.write_all(&render_session_log(session.actions()))?,
            _ => match fallback.as_deref_mut() {
                Some(handler) => match shlex::split(trimmed) {
                    Some(words) => {
                        if let Err(e) = handler(&words, output) {
                            writeln!(output, "error: {e}")?;
                        }
                    }
                    None => writeln!(output, "error: unbalanced quotes")?,
                },
                None => writeln!(output, "error: unknown command {verb:?} (try help)")?,
            },
        }
    }
    session.close();
    let path = store.root().join("logs").join(format!(
        "shell-{domain_name}-{}.log",
        Utc::now().format("%Y%m%dT%H%M%S%.3fZ")
    ));
    session.write_log(&path)?;
    writeln!(output, "session log: {}", path.display())?;
    Ok((0, path))
}
