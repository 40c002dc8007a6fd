//! `--assert` expressions: `name≈value±tol`, `name<=value`, `name>=value`.
//! `~` and `+-` are accepted for `≈` and `±`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    Near { value: f64, tol: f64 },
    AtMost(f64),
    AtLeast(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub metric: String,
    pub check: Check,
    text: String,
}

impl Assertion {
    pub fn holds(&self, x: f64) -> bool {
        match self.check {
            Check::Near { value, tol } => (x - value).abs() <= tol,
            Check::AtMost(v) => x <= v,
            Check::AtLeast(v) => x >= v,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn number(s: &str, whole: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("bad number `{}` in assertion `{whole}`", s.trim()))
}

impl FromStr for Assertion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.replace('≈', "~").replace('±', "+-");
        let (metric, check) = if let Some((name, rest)) = norm.split_once("<=") {
            (name, Check::AtMost(number(rest, s)?))
        } else if let Some((name, rest)) = norm.split_once(">=") {
            (name, Check::AtLeast(number(rest, s)?))
        } else if let Some((name, rest)) = norm.split_once('~') {
            let (value, tol) = rest
                .split_once("+-")
                .ok_or_else(|| format!("assertion `{s}` needs a tolerance, e.g. rate≈1±0.1"))?;
            let tol = number(tol, s)?;
            if tol < 0.0 {
                return Err(format!("negative tolerance in assertion `{s}`"));
            }
            (name, Check::Near { value: number(value, s)?, tol })
        } else {
            return Err(format!("cannot parse assertion `{s}`; use name≈value±tol, name<=value or name>=value"));
        };
        let metric = metric.trim();
        if metric.is_empty() || !metric.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("bad quantity name in assertion `{s}`"));
        }
        Ok(Assertion {
            metric: metric.to_string(),
            check,
            text: s.to_string(),
        })
    }
}

/// One evaluated assertion, as reported.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub expr: String,
    pub metric: String,
    pub value: f64,
    pub pass: bool,
}

/// Evaluates `asserts` against the named quantities of a report. Unknown
/// names are an error listing the available ones.
pub fn evaluate(asserts: &[Assertion], metrics: &[(&str, f64)]) -> Result<Vec<Outcome>, String> {
    asserts
        .iter()
        .map(|a| {
            let value = metrics
                .iter()
                .find(|(name, _)| *name == a.metric)
                .map(|&(_, v)| v)
                .ok_or_else(|| {
                    let names: Vec<&str> = metrics.iter().map(|m| m.0).collect();
                    format!("unknown quantity `{}` in --assert; available: {}", a.metric, names.join(", "))
                })?;
            Ok(Outcome {
                expr: a.text.clone(),
                metric: a.metric.clone(),
                value,
                pass: a.holds(value),
            })
        })
        .collect()
}
