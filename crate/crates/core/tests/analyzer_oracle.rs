use std::collections::BTreeMap;

use boa_core::analyzer::{diff_reports, normalize_message, scan, Report, RuleSet, Severity};
use proptest::prelude::*;

const CORPUS: &str = include_str!("fixtures/gcc-build.log");

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn leading_digits(s: &str) -> usize {
    s.bytes().take_while(u8::is_ascii_digit).count()
}

/// `file:line:[col:] <kw>: msg` parsed by hand.
fn oracle_located(line: &str, kw: &str) -> Option<(String, Option<u64>, String)> {
    let colon = line.find(':')?;
    let file = &line[..colon];
    if file.is_empty() || file.chars().any(char::is_whitespace) {
        return None;
    }
    let rest = &line[colon + 1..];
    let n = leading_digits(rest);
    if n == 0 || !rest[n..].starts_with(':') {
        return None;
    }
    let line_no = rest[..n].parse::<u64>().ok().filter(|&v| v > 0);
    let rest = &rest[n + 1..];
    let marker = format!(" {kw}:");
    let msg = match rest.strip_prefix(&marker) {
        Some(m) => m,
        None => {
            let c = leading_digits(rest);
            if c == 0 || !rest[c..].starts_with(':') {
                return None;
            }
            rest[c + 1..].strip_prefix(&marker)?
        }
    };
    Some((file.to_string(), line_no, msg.to_string()))
}

fn oracle_undefined_ref(line: &str) -> bool {
    let needle = "undefined reference to";
    line.match_indices(needle).any(|(i, _)| {
        let before_ok = line[..i].chars().next_back().map_or(true, |c| !is_word(c));
        let after_ok = line[i + needle.len()..].chars().next().map_or(true, |c| !is_word(c));
        before_ok && after_ok
    })
}

type OracleDiag = (Severity, Option<String>, Option<u64>, String);

fn oracle(text: &str) -> Vec<OracleDiag> {
    let mut out = Vec::new();
    for line in text.lines() {
        let message = |m: &str| {
            let m = m.trim();
            if m.is_empty() { line.trim().to_string() } else { m.to_string() }
        };
        if let Some((f, l, m)) = oracle_located(line, "error") {
            out.push((Severity::Error, Some(f), l, message(&m)));
        } else if let Some((f, l, m)) = oracle_located(line, "warning") {
            out.push((Severity::Warning, Some(f), l, message(&m)));
        } else if oracle_undefined_ref(line) {
            out.push((Severity::Error, None, None, line.trim().to_string()));
        }
    }
    out
}

fn as_tuples(report: &Report) -> Vec<OracleDiag> {
    report
        .diagnostics
        .iter()
        .map(|d| (d.severity, d.file.clone(), d.line, d.message.clone()))
        .collect()
}

#[test]
fn corpus_is_large_enough() {
    assert!(CORPUS.lines().count() >= 200);
}

#[test]
fn scan_matches_oracle_on_corpus() {
    let report = scan(CORPUS.as_bytes(), &RuleSet::gcc_classic(), "corpus");
    let expected = oracle(CORPUS);
    assert_eq!(as_tuples(&report), expected);
    for sev in Severity::ALL {
        let n = expected.iter().filter(|d| d.0 == sev).count() as u64;
        assert_eq!(report.count(sev), n, "{sev:?}");
    }
    let mut per_file: BTreeMap<String, u64> = BTreeMap::new();
    for (_, f, _, _) in &expected {
        if let Some(f) = f {
            *per_file.entry(f.clone()).or_default() += 1;
        }
    }
    let got: BTreeMap<String, u64> = report
        .per_file
        .iter()
        .map(|(f, c)| (f.clone(), c.values().sum()))
        .collect();
    assert_eq!(got, per_file);
    report.validate().unwrap();
    // sanity: the corpus exercises all three rules
    assert!(report.errors() > 20 && report.warnings() > 20);
    assert!(report.diagnostics.iter().any(|d| d.rule_id == "ld-undefined"));
}

#[test]
fn near_misses_are_not_classified() {
    let rules = RuleSet::gcc_classic();
    for line in [
        "the word error: appears mid line",
        "x.c:abc: error: non-numeric line",
        "x.c:1: Error: capitalised",
        "x.c:1: warnings: plural form",
        "x.c: error: missing line number",
        "undefined reference toy",
        "xundefined reference to foo",
    ] {
        assert!(scan(line.as_bytes(), &rules, "b").diagnostics.is_empty(), "{line}");
        assert!(oracle(line).is_empty(), "{line}");
    }
}

fn corpus_lines() -> Vec<&'static str> {
    CORPUS.lines().collect()
}

fn build(indices: &[usize]) -> Report {
    let lines = corpus_lines();
    let text: String = indices.iter().map(|&i| format!("{}\n", lines[i])).collect();
    scan(text.as_bytes(), &RuleSet::gcc_classic(), "b")
}

fn keys(diags: &[boa_core::analyzer::Diagnostic]) -> Vec<(String, Option<String>, String)> {
    let mut k: Vec<_> = diags
        .iter()
        .map(|d| (d.rule_id.clone(), d.file.clone(), normalize_message(&d.message)))
        .collect();
    k.sort();
    k
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn counts_invariant_under_line_permutation(mut idx in prop::collection::vec(0..240usize, 0..150), seed in any::<u64>()) {
        let a = build(&idx);
        // deterministic shuffle
        let mut s = seed | 1;
        for i in (1..idx.len()).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            idx.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let b = build(&idx);
        prop_assert_eq!(&a.counts, &b.counts);
        prop_assert_eq!(keys(&a.diagnostics), keys(&b.diagnostics));
    }

    #[test]
    fn diff_identities(x in prop::collection::vec(0..240usize, 0..120), y in prop::collection::vec(0..240usize, 0..120)) {
        let a = build(&x);
        let b = build(&y);

        let same = diff_reports(&a, &a).unwrap();
        prop_assert!(same.new.is_empty() && same.fixed.is_empty());
        prop_assert_eq!(same.persisting.len(), a.diagnostics.len());

        let ab = diff_reports(&a, &b).unwrap();
        let ba = diff_reports(&b, &a).unwrap();
        prop_assert_eq!(ab.persisting.len() + ab.fixed.len(), a.diagnostics.len());
        prop_assert_eq!(ab.persisting.len() + ab.new.len(), b.diagnostics.len());
        prop_assert_eq!(keys(&ab.new), keys(&ba.fixed));
        prop_assert_eq!(keys(&ab.fixed), keys(&ba.new));
        prop_assert_eq!(ab.persisting.len(), ba.persisting.len());
    }
}

#[test]
fn report_json_round_trip() {
    let report = scan(CORPUS.as_bytes(), &RuleSet::gcc_classic(), "corpus");
    let back = Report::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_json(), report.to_json());
}
