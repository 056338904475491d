//! Error types shared across the crate.

use thiserror::Error;

use crate::glm::IdentificationReport;

/// Errors raised while ingesting or validating a dataset.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: {message}")]
    Validation { row: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Errors raised by the estimators.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("singular weighted system{}: {report}", focal_note(.focal))]
    SingularSystem {
        focal: Option<usize>,
        report: IdentificationReport,
    },
    #[error("divergence: |linear predictor| exceeded {guard} at sample {sample}{}", focal_note(.focal))]
    Divergence {
        focal: Option<usize>,
        sample: usize,
        guard: f64,
    },
    #[error("non-finite fitted mean at sample {sample}{}", focal_note(.focal))]
    DegenerateMean { focal: Option<usize>, sample: usize },
    #[error("degrees of freedom exhausted: effective parameters {enp:.3} >= sample count {n}")]
    DegreesOfFreedom { n: usize, enp: f64 },
    #[error("null deviance is zero; pseudo-R2 undefined")]
    DegenerateNull,
    #[error("bandwidth selection failed: {reason} ({evaluations} evaluations, all infeasible)")]
    SelectionFailure { reason: String, evaluations: usize },
    #[error("every bandwidth candidate failed: {summary}")]
    AllCandidatesFailed { summary: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn focal_note(focal: &Option<usize>) -> String {
    match focal {
        Some(i) => format!(" (location {i})"),
        None => String::new(),
    }
}
