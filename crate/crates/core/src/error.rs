use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class; decides the CLI exit code and the FFI status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("kappa_equals_lambda: kappa ({kappa}) must differ from lambda ({lambda})")]
    KappaEqualsLambda { kappa: f64, lambda: f64 },

    #[error("lambda_equals_alpha_plus_beta: lambda ({lambda}) must differ from alpha + beta ({sum})")]
    LambdaEqualsAlphaPlusBeta { lambda: f64, sum: f64 },

    #[error("operation requires the {expected} drift model")]
    WrongDriftModel { expected: &'static str },

    #[error("degenerate_Z_process: C(T)T - D(T)^2 = {determinant} is not positive")]
    DegenerateZProcess { determinant: f64 },

    #[error("leverage_cost_singularity: 1 {sign} omega*f = {denominator}")]
    LeverageCostSingularity { sign: char, denominator: f64 },

    #[error("outside_effective_support: both conditional densities vanish at x = {x}")]
    OutsideEffectiveSupport { x: f64 },

    #[error("quadrature failed for {what}: achieved error estimate {achieved:e}")]
    QuadratureFailure { what: &'static str, achieved: f64 },

    #[error("cfl_violation: CFL number {cfl} exceeds 1")]
    CflViolation { cfl: f64 },

    #[error("pde_instability: {0}")]
    PdeInstability(String),

    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing input file {}", path.display())]
    MissingInput { path: PathBuf },

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable snake_case identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::KappaEqualsLambda { .. } => "kappa_equals_lambda",
            Error::LambdaEqualsAlphaPlusBeta { .. } => "lambda_equals_alpha_plus_beta",
            Error::WrongDriftModel { .. } => "wrong_drift_model",
            Error::DegenerateZProcess { .. } => "degenerate_Z_process",
            Error::LeverageCostSingularity { .. } => "leverage_cost_singularity",
            Error::OutsideEffectiveSupport { .. } => "outside_effective_support",
            Error::QuadratureFailure { .. } => "quadrature_failure",
            Error::CflViolation { .. } => "cfl_violation",
            Error::PdeInstability(_) => "pde_instability",
            Error::Domain { .. } => "domain",
            Error::ResourceLimit(_) => "resource_limit",
            Error::Config(_) => "config",
            Error::MissingInput { .. } => "missing_input",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter { .. }
            | Error::KappaEqualsLambda { .. }
            | Error::LambdaEqualsAlphaPlusBeta { .. }
            | Error::WrongDriftModel { .. }
            | Error::Config(_)
            | Error::MissingInput { .. }
            | Error::Json(_) => ErrorClass::Config,
            Error::Io { .. } | Error::Csv(_) => ErrorClass::Io,
            _ => ErrorClass::Numeric,
        }
    }
}
