//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge ({u}, {v}) out of range for a graph with {n} nodes")]
    EdgeOutOfRange { u: usize, v: usize, n: usize },

    #[error("self-loop ({0}, {0}) is not allowed in an edge list")]
    SelfLoop(usize),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("beta = {0} outside [0, 1]")]
    BetaOutOfRange(f64),

    #[error("hop count K = {k} exceeds the supported maximum {max}")]
    HopLimit { k: usize, max: usize },

    #[error("{context}: n = {n} exceeds the verification-scale limit {max}")]
    OracleScale {
        context: &'static str,
        n: usize,
        max: usize,
    },

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("spectral oracle disagreement: max |eig - recursion| = {max_dev:e} > {tol:e}")]
    OracleDisagreement { max_dev: f64, tol: f64 },

    #[error("class {0} has no member nodes")]
    EmptyClass(usize),

    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("target rank {r} exceeds min(n, d) = {limit}")]
    RankOutOfRange { r: usize, limit: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("{0} class set is empty")]
    EmptyClassSet(&'static str),

    #[error("non-finite {what} at epoch {epoch}: {detail}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        detail: String,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {msg}")]
    Json { path: PathBuf, msg: String },

    #[error("CSD table {path} is missing class {class}")]
    MissingClass { class: usize, path: PathBuf },

    #[error("CSD vector for class {class} has width {got}, expected {expected}")]
    CsdWidth {
        class: usize,
        expected: usize,
        got: usize,
    },

    #[error("CSD vector for class {class} contains a non-finite entry")]
    NonFiniteCsd { class: usize },

    #[error("unknown dataset id '{0}'")]
    UnknownDataset(String),

    #[error("missing fixture: {0}")]
    MissingFixture(PathBuf),

    #[error("checksum mismatch for {path}: manifest {expected}, file {got}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by user-supplied configuration or input files,
    /// as opposed to runtime failures.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::Json { .. }
                | Error::UnknownDataset(_)
                | Error::MissingFixture(_)
                | Error::MissingClass { .. }
                | Error::CsdWidth { .. }
                | Error::NonFiniteCsd { .. }
                | Error::BetaOutOfRange(_)
                | Error::HopLimit { .. }
        )
    }
}
