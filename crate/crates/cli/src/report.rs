//! Versioned JSON reports and the CSV writers shared by all commands.

use std::fs;
use std::path::{Path, PathBuf};

use hermproj_core::normlab::SweepRow;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Revision of the source tree the binary was built from, or `unknown`.
pub const GIT_REVISION: &str = env!("HERMPROJ_GIT_REVISION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Measured and reported, but no claim to test against.
    NotAsserted,
}

impl Verdict {
    pub fn from_pass(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Fail => 1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub git_revision: String,
    pub seed: u64,
    /// The fully resolved parameters the command ran with.
    pub config: Value,
    pub verdict: Verdict,
    pub results: Value,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(command: &str, seed: u64, config: Value, verdict: Verdict, results: Value) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            command: command.into(),
            git_revision: GIT_REVISION.into(),
            seed,
            config,
            verdict,
            results,
            notes: Vec::new(),
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.verdict.exit_code()
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json(dir: &Path, name: &str, report: &Report) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// A CSV writer with `,` delimiter and LF terminators.
pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e15)`;
/// `inf` for an infinite exponent.
pub fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub const SWEEP_HEADER: [&str; 9] = ["d", "lambda", "mu", "mu_tilde", "p", "q", "norm", "residual", "restarts_agreeing"];

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.d.to_string(),
            r.lambda.to_string(),
            opt(r.mu),
            opt(r.mu_tilde),
            num(r.p),
            num(r.q),
            num(r.norm),
            num(r.residual),
            r.restarts_agreeing.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 9.7e-17, -2.5e20, 123456.789] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(9.7e-17), "9.7e-17");
    }

    #[test]
    fn fail_exits_one() {
        assert_eq!(Verdict::Fail.exit_code(), 1);
        assert_eq!(Verdict::Pass.exit_code(), 0);
        assert_eq!(Verdict::NotAsserted.exit_code(), 0);
    }
}
