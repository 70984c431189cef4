use serde::Serialize;
use thiserror::Error;

use crate::newton::IterationRecord;

/// Which coordinate of the spherical chart degenerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartAxis {
    PathAngle,
    Latitude,
}

impl std::fmt::Display for ChartAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChartAxis::PathAngle => write!(f, "cos(gamma)"),
            ChartAxis::Latitude => write!(f, "cos(L)"),
        }
    }
}

/// Why a Newton solve gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonFailureKind {
    JacobianSingular,
    LineSearchStalled,
    MaxIterations,
    NonFiniteStart,
}

/// Diagnostics carried by every failed Newton solve.
#[derive(Debug, Clone, Serialize)]
pub struct NewtonFailure {
    pub kind: NewtonFailureKind,
    pub last_iterate: Vec<f64>,
    pub last_residual: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

/// Pipeline stage, used to tag wrapped errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    StepOne,
    Lambda1,
    Lambda2,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::StepOne => write!(f, "step-one"),
            Stage::Lambda1 => write!(f, "lambda1-continuation"),
            Stage::Lambda2 => write!(f, "lambda2-continuation"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular chart: |{axis}| = {value:e} below tolerance")]
    SingularChart { axis: ChartAxis, value: f64 },

    #[error("mass depleted at t = {t} s (m = {mass} kg)")]
    MassDepleted { t: f64, mass: f64 },

    #[error("range to target {range} m is below the 1 m floor")]
    ZeroRange { range: f64 },

    #[error("costate guess system is singular (|det| = {det:e})")]
    SingularGuess { det: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("integration failed at node {node}: {source}")]
    IntegrationFailed {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("u-stationary point is not a maximum (p_w + 1 = {margin:e})")]
    ConcavityLost { margin: f64 },

    #[error("newton solve failed: {:?} after {} iterations", .0.kind, .0.history.len())]
    Newton(Box<NewtonFailure>),

    #[error("step one diverged: {0}")]
    StepOneDiverged(Box<Error>),

    #[error("continuation stalled in {stage} at lambda = {lambda} (step {step:e} below floor)")]
    ContinuationStalled {
        stage: Stage,
        lambda: f64,
        step: f64,
        last: Box<Error>,
    },

    #[error("{stage}: {source}")]
    InStage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Strips `InStage` and `IntegrationFailed` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InStage { source, .. } | Error::IntegrationFailed { source, .. } => {
                source.root()
            }
            Error::StepOneDiverged(inner) => inner.root(),
            other => other,
        }
    }

    /// Short machine-readable tag for JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SingularChart { .. } => "singular_chart",
            Error::MassDepleted { .. } => "mass_depleted",
            Error::ZeroRange { .. } => "zero_range",
            Error::SingularGuess { .. } => "singular_guess",
            Error::NonFinite { .. } => "non_finite",
            Error::IntegrationFailed { .. } => "integration_failed",
            Error::ConcavityLost { .. } => "concavity_lost",
            Error::Newton(f) => match f.kind {
                NewtonFailureKind::JacobianSingular => "jacobian_singular",
                NewtonFailureKind::LineSearchStalled => "line_search_stalled",
                NewtonFailureKind::MaxIterations => "max_iterations",
                NewtonFailureKind::NonFiniteStart => "non_finite_start",
            },
            Error::StepOneDiverged(_) => "step_one_diverged",
            Error::ContinuationStalled { .. } => "continuation_stalled",
            Error::InStage { .. } => "stage_error",
            Error::Validation { .. } => "validation_error",
            Error::Parse(_) => "parse_error",
            Error::Io(_) => "io_error",
        }
    }

    pub fn is_input_error(&self) -> bool {
        matches!(
            self.root(),
            Error::Validation { .. } | Error::Parse(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
