use std::fmt::{self, Write as _};
use std::io::Write;

use serde::Serialize;

use crate::args::{Format, OutputArgs};
use crate::assertion::{evaluate, Outcome};

pub const SCHEMA: &str = "guesswork-lab/1";
pub const BITS_PER_M: &str = "bits_per_m";
pub const GUESSES: &str = "guesses";

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    schema: &'static str,
    command: &'a str,
    units: &'a str,
    config: &'a C,
    replay: &'a str,
    result: &'a R,
    #[serde(skip_serializing_if = "<[Outcome]>::is_empty")]
    assertions: &'a [Outcome],
}

/// A command-line mistake that the argument parser could not catch.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// At least one `--assert` did not hold.
#[derive(Debug)]
pub struct AssertionFailed(pub Vec<String>);

impl fmt::Display for AssertionFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "assertion failed: {}", self.0.join("; "))
    }
}

impl std::error::Error for AssertionFailed {}

/// Everything a command produces, rendered by [`emit`].
pub struct Document<'a, C: Serialize, R: Serialize> {
    pub command: &'static str,
    pub units: &'static str,
    pub config: &'a C,
    pub replay: String,
    pub result: &'a R,
    pub text: String,
    pub csv: String,
    pub metrics: Vec<(&'static str, f64)>,
}

/// Writes `doc` in the requested format and checks its assertions.
pub fn emit<C: Serialize, R: Serialize>(out: &OutputArgs, doc: Document<'_, C, R>) -> anyhow::Result<()> {
    let outcomes = evaluate(&out.asserts, &doc.metrics).map_err(UsageError)?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let config = serde_json::to_string(doc.config)?;
    match out.format {
        Format::Json => {
            let env = Envelope {
                schema: SCHEMA,
                command: doc.command,
                units: doc.units,
                config: doc.config,
                replay: &doc.replay,
                result: doc.result,
                assertions: &outcomes,
            };
            serde_json::to_writer_pretty(&mut w, &env)?;
            writeln!(w)?;
        }
        Format::Text => {
            writeln!(w, "# {SCHEMA} {} (units: {})", doc.command, doc.units)?;
            writeln!(w, "# config: {config}")?;
            writeln!(w, "# replay: {}", doc.replay)?;
            w.write_all(doc.text.as_bytes())?;
            for o in &outcomes {
                let verdict = if o.pass { "ok" } else { "FAILED" };
                writeln!(w, "assert {}: {} = {} {verdict}", o.expr, o.metric, o.value)?;
            }
        }
        Format::Csv => {
            // The echo goes to stderr so stdout stays a clean CSV table.
            let mut e = std::io::stderr().lock();
            writeln!(e, "# {SCHEMA} {} (units: {})", doc.command, doc.units)?;
            writeln!(e, "# config: {config}")?;
            writeln!(e, "# replay: {}", doc.replay)?;
            w.write_all(doc.csv.as_bytes())?;
            for o in &outcomes {
                writeln!(e, "# assert {}: {} = {} {}", o.expr, o.metric, o.value, o.pass)?;
            }
        }
    }
    w.flush()?;
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("{} ({} = {})", o.expr, o.metric, o.value))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AssertionFailed(failed).into())
    }
}

/// Builds the replay command line from `(flag, value)` pairs; a `None`
/// value is a bare switch.
pub fn replay(subcommand: &str, flags: &[(&str, Option<String>)]) -> String {
    let mut s = format!("guesswork-lab {subcommand}");
    for (flag, value) in flags {
        write!(s, " --{flag}").unwrap();
        if let Some(v) = value {
            s.push(' ');
            s.push_str(&shell_quote(v));
        }
    }
    s
}

fn shell_quote(v: &str) -> String {
    let plain = !v.is_empty()
        && v.chars().all(|c| c.is_ascii_alphanumeric() || "._,:+-=/".contains(c));
    if plain {
        v.to_string()
    } else {
        format!("'{}'", v.replace('\'', r"'\''"))
    }
}

/// Left-aligned text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        s.push_str(parts.join("  ").trim_end());
        s.push('\n');
    };
    line(&mut s, header.to_vec());
    for r in rows {
        line(&mut s, r.iter().map(String::as_str).collect());
    }
    s
}

/// CSV text from a header and rows.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_quotes_only_when_needed() {
        let r = replay(
            "simulate",
            &[("p", Some("0.3".into())), ("assert", Some("rate≈1±0.1".into())), ("most-likely", None)],
        );
        assert_eq!(r, "guesswork-lab simulate --p 0.3 --assert 'rate≈1±0.1' --most-likely");
    }

    #[test]
    fn tables_align() {
        let t = table(&["a", "bb"], &[vec!["xxx".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxxx  1\n");
    }
}
