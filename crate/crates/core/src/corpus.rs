//! Loading program files, with optional expected-result headers.
//!
//! A header is a comment line of the form `; expect: RESULT`, where RESULT
//! is a term, `timeout`, `stuck`, or `continuation`.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::concrete::{Outcome, UnloadError};
use crate::syntax::{alpha_eq, parse, Expr, SyntaxError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expectation {
    Value(Expr),
    Timeout,
    Stuck,
    Continuation,
}

impl Expectation {
    /// Whether a machine outcome is the expected one; values compare up to
    /// α-equivalence.
    pub fn matches(&self, outcome: &Outcome) -> bool {
        match (self, outcome) {
            (Expectation::Value(e), Outcome::Value(v)) => alpha_eq(e, v),
            (Expectation::Timeout, Outcome::Timeout) => true,
            (Expectation::Stuck, Outcome::Stuck(_)) => true,
            (Expectation::Continuation, Outcome::Opaque(UnloadError::Continuation)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Value(e) => write!(f, "{e}"),
            Expectation::Timeout => write!(f, "timeout"),
            Expectation::Stuck => write!(f, "stuck"),
            Expectation::Continuation => write!(f, "continuation"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Program {
    pub name: String,
    pub path: PathBuf,
    pub source: String,
    pub expr: Expr,
    pub expect: Option<Expectation>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Syntax { path: PathBuf, source: SyntaxError },
    #[error("{path}: bad expectation header: {source}")]
    Header { path: PathBuf, source: SyntaxError },
}

pub fn parse_expectation(text: &str) -> Result<Expectation, SyntaxError> {
    Ok(match text.trim() {
        "timeout" => Expectation::Timeout,
        "stuck" => Expectation::Stuck,
        "continuation" => Expectation::Continuation,
        term => Expectation::Value(parse(term)?),
    })
}

pub fn load_file(path: &Path) -> Result<Program, CorpusError> {
    let source = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
    let expr = parse(&source).map_err(|source| CorpusError::Syntax { path: path.into(), source })?;
    let expect = source
        .lines()
        .find_map(|l| l.trim().strip_prefix("; expect:"))
        .map(parse_expectation)
        .transpose()
        .map_err(|source| CorpusError::Header { path: path.into(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Program { name, path: path.into(), source, expr, expect })
}

/// Every `.scm` file in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<Program>, CorpusError> {
    let entries = std::fs::read_dir(dir).map_err(|source| CorpusError::Io { path: dir.into(), source })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|source| CorpusError::Io { path: dir.into(), source })?.path();
        if path.extension().is_some_and(|x| x == "scm") {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| load_file(p)).collect()
}

/// Directory of the programs shipped with this crate.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

/// Pure-core programs (with `if`).
pub fn pure() -> Result<Vec<Program>, CorpusError> {
    load_dir(&bundled_dir().join("pure"))
}

/// Programs using `set!` and `callcc`.
pub fn effects() -> Result<Vec<Program>, CorpusError> {
    load_dir(&bundled_dir().join("effects"))
}

pub fn all() -> Result<Vec<Program>, CorpusError> {
    let mut out = pure()?;
    out.extend(effects()?);
    Ok(out)
}
