//! Command-line front end: structure specs in, reports and tables out.

mod commands;
mod report;
mod spec;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{execute, Command, Options};
pub use report::{error_json, format_f64, to_canonical_json, Check, CsvTable, Report, ReportFormatter};
pub use spec::{
    parse_spec, AlgebroidBody, Body, FibrationSpec, FiniteSpec, LoopSpec, LoopoidSpec,
    OctonionSpec, SpecKind, StructureSpec, SystemSpec,
};

use crate::error::{Error, Result};

/// Environment fallback for the seed when neither `--seed` nor the spec sets one.
pub const SEED_ENV: &str = "LOOPOID_LAB_SEED";

#[derive(Debug, Parser)]
#[command(name = "loopoid-lab", version, about = "Verify quasiloopoid structures and run discrete Lagrangian dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Classify a finite table or construction
    VerifyFinite(Common),
    /// Octonion table, norm and Moufang checks
    Octonion(Common),
    /// Structure constants of a smooth loop
    LoopAlgebra(Common),
    /// Quasiloopoid and loopoid axioms
    LoopoidCheck(Common),
    /// Brackets and anchors of the skew algebroid
    LieFunctor(Common),
    /// Tangent loopoid checks
    TangentCheck(Common),
    /// Discrete Euler-Lagrange trajectory
    Simulate(Common),
    /// Legendre transforms and regularity
    Legendre(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Structure spec (JSON)
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output file: `.csv` writes the command's table, anything else the JSON report
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Sub::VerifyFinite(c) => (Command::VerifyFinite, c),
            Sub::Octonion(c) => (Command::Octonion, c),
            Sub::LoopAlgebra(c) => (Command::LoopAlgebra, c),
            Sub::LoopoidCheck(c) => (Command::LoopoidCheck, c),
            Sub::LieFunctor(c) => (Command::LieFunctor, c),
            Sub::TangentCheck(c) => (Command::TangentCheck, c),
            Sub::Simulate(c) => (Command::Simulate, c),
            Sub::Legendre(c) => (Command::Legendre, c),
        }
    }
}

/// `--seed`, then the spec's `seed`, then `LOOPOID_LAB_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, spec: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(spec) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| Error::SchemaError {
            path: SEED_ENV.into(),
            message: format!("'{v}' is not an unsigned integer"),
        }),
        None => Ok(0),
    }
}

pub fn load_spec(path: &Path) -> Result<StructureSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_spec(&text)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(command: Command, args: &Common) -> Result<Report> {
    let spec = match &args.spec {
        Some(p) => load_spec(p)?,
        None if command == Command::Octonion => StructureSpec {
            body: Body::Octonion(OctonionSpec::default()),
            seed: None,
        },
        None => {
            return Err(Error::SchemaError {
                path: "--spec".into(),
                message: format!("{} needs a spec file", command.name()),
            })
        }
    };
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(args.seed, spec.seed, env.as_deref())?;
    let opts = Options {
        samples: args.samples,
        tol: args.tol,
        steps: args.steps,
    };
    let report = execute(command, &spec, seed, &opts)?;
    if let Some(out) = &args.out {
        let is_csv = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let table = report.table.as_ref().ok_or_else(|| {
                Error::Unsupported(format!("{} produces no table", command.name()))
            })?;
            write_file(out, &table.to_bytes()?)?;
        } else {
            write_file(out, report.to_json().as_bytes())?;
        }
    }
    Ok(report)
}

/// Run one CLI invocation; the report (or an error object) goes to stdout.
/// Exit status: 0 when every asserted check passes, 1 when one fails,
/// 2 on errors.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, args) = cli.command.split();
    let mut stdout = std::io::stdout().lock();
    match run(command, &args) {
        Ok(report) => {
            let _ = stdout.write_all(report.to_json().as_bytes());
            if report.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let _ = stdout.write_all(error_json(&e).as_bytes());
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some(4), Some("5")).unwrap(), 3);
        assert_eq!(resolve_seed(None, Some(4), Some("5")).unwrap(), 4);
        assert_eq!(resolve_seed(None, None, Some("5")).unwrap(), 5);
        assert_eq!(resolve_seed(None, None, None).unwrap(), 0);
        assert!(resolve_seed(None, None, Some("x")).is_err());
    }

    #[test]
    fn missing_dim_is_located() {
        let text = r#"{"kind":"loopoid","body":{"type":"product","loop":{"type":"planar_h"}}}"#;
        match parse_spec(text) {
            Err(Error::SchemaError { path, .. }) => assert_eq!(path, "$.body.dim"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fractional_exponent_rejected() {
        let text = r#"{"kind":"system","body":{"loopoid":{"type":"pair","dim":1},
            "lagrangian":{"terms":[{"c":1.0,"e":[1.5,0]}]},"initial":[0,1]}}"#;
        match parse_spec(text) {
            Err(Error::SchemaError { path, .. }) => {
                assert!(path.starts_with("$.body.lagrangian.terms[0].e"), "{path}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn product_spec_round_trips() {
        let text = r#"{"kind":"loopoid","seed":7,"body":{"dim":2,"type":"product","loop":{"type":"planar_h"}}}"#;
        let s = parse_spec(text).unwrap();
        let c = s.to_canonical_json();
        let again = parse_spec(&c).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.to_canonical_json(), c);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"kind":"loopoid","body":{"type":"pair","dim":1,"extra":0}}"#;
        assert!(matches!(parse_spec(text), Err(Error::SchemaError { .. })));
        let text = r#"{"kind":"loopoid","body":{"type":"pair","dim":1},"other":0}"#;
        assert!(matches!(parse_spec(text), Err(Error::SchemaError { .. })));
    }
}
