use std::fmt::Write;

use super::{Report, Severity};

const TOP_FILES: usize = 10;

/// Files ordered by (errors desc, warnings desc, name).
fn ranked_files(report: &Report) -> Vec<(&str, u64, u64)> {
    let mut files: Vec<_> = report
        .per_file
        .iter()
        .map(|(f, c)| {
            (
                f.as_str(),
                c.get(&Severity::Error).copied().unwrap_or(0),
                c.get(&Severity::Warning).copied().unwrap_or(0),
            )
        })
        .collect();
    files.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0)));
    files
}

fn totals_line(report: &Report) -> String {
    format!(
        "errors: {} warnings: {} info: {} notes: {}",
        report.errors(),
        report.warnings(),
        report.count(Severity::Info),
        report.count(Severity::Note)
    )
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "build: {}", report.build_id);
    let _ = writeln!(out, "rules: {}", report.ruleset);
    let _ = writeln!(out, "{}", totals_line(report));
    let files = ranked_files(report);
    if !files.is_empty() {
        let _ = writeln!(out, "top files:");
        for (file, errors, warnings) in files.into_iter().take(TOP_FILES) {
            let _ = writeln!(out, "  {errors:>5} {warnings:>5}  {file}");
        }
    }
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Single self-contained page: totals, top files and every diagnostic.
pub fn render_html(report: &Report) -> String {
    let mut out = String::new();
    let title = format!("Build report: {}", escape(&report.build_id));
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{title}</title>\n\
<style>\nbody {{ font-family: sans-serif; }}\ntable {{ border-collapse: collapse; }}\n\
td, th {{ border: 1px solid #999; padding: 2px 6px; }}\n.error {{ color: #b00; }}\n.warning {{ color: #a60; }}\n</style>\n\
</head>\n<body>\n<h1>{title}</h1>\n<p>Rule set: {}</p>\n",
        escape(&report.ruleset)
    );

    out.push_str("<h2>Totals</h2>\n<table>\n<tr><th>severity</th><th>count</th></tr>\n");
    for sev in Severity::ALL {
        let _ = writeln!(out, "<tr><td class=\"{sev}\">{sev}</td><td>{}</td></tr>", report.count(sev));
    }
    let _ = writeln!(out, "</table>\n<p>{}</p>", totals_line(report));

    out.push_str("<h2>Top files</h2>\n<table>\n<tr><th>file</th><th>errors</th><th>warnings</th></tr>\n");
    for (file, errors, warnings) in ranked_files(report).into_iter().take(TOP_FILES) {
        let _ = writeln!(out, "<tr><td>{}</td><td>{errors}</td><td>{warnings}</td></tr>", escape(file));
    }
    out.push_str("</table>\n");

    out.push_str("<h2>Diagnostics</h2>\n<table>\n<tr><th>log line</th><th>severity</th><th>file</th><th>line</th><th>rule</th><th>message</th></tr>\n");
    for d in &report.diagnostics {
        let _ = writeln!(
            out,
            "<tr><td>{}</td><td class=\"{}\">{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            d.source_line_no,
            d.severity,
            d.severity,
            escape(d.file.as_deref().unwrap_or("")),
            d.line.map(|l| l.to_string()).unwrap_or_default(),
            escape(&d.rule_id),
            escape(&d.message)
        );
    }
    out.push_str("</table>\n</body>\n</html>\n");
    out
}
