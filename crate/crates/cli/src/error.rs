//! Exit-code policy and the machine-readable error document.
//!
//! Exit 0: success. Exit 1: a computation failed (fit, recovery, selection);
//! standard error carries a one-line JSON document `{"error": {"kind",
//! "message"}}`. Exit 2: usage or input-validation error; standard error
//! carries a human-readable message (clap produces its own for flag
//! parsing).

use std::collections::BTreeMap;

use gapdyn_core::dynamics::DynamicsError;
use gapdyn_core::fit::FitError;
use gapdyn_core::select::SelectError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or input files that fail validation before any math runs.
    Usage(String),
    /// The requested computation was attempted and failed.
    Computation { kind: &'static str, message: String },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Computation { .. } => 1,
        }
    }

    /// The stderr payload: JSON for computation errors, plain text for usage.
    pub fn stderr_payload(&self) -> String {
        match self {
            CliError::Usage(message) => format!("error: {message}"),
            CliError::Computation { kind, message } => {
                let mut inner = BTreeMap::new();
                inner.insert("kind", serde_json::Value::from(*kind));
                inner.insert("message", serde_json::Value::from(message.as_str()));
                let mut doc = BTreeMap::new();
                doc.insert("error", inner);
                serde_json::to_string(&doc).expect("string map serializes")
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Computation {
            kind: "io",
            message: e.to_string(),
        }
    }
}

/// Parameter errors raised while validating flag values are usage errors;
/// the flag names give the operator something to fix.
pub fn params_usage_error(e: DynamicsError) -> CliError {
    let flags = match e {
        DynamicsError::RateOrdering { .. } => "--alpha/--beta",
        DynamicsError::NonPositiveRate { .. } => "--alpha/--beta/--k",
        DynamicsError::InitialOrdering { .. } | DynamicsError::NonFiniteInitial => "--us0/--uv0",
        DynamicsError::InvalidStep { .. } | DynamicsError::StepTooSmall { .. } => "--step",
        DynamicsError::InvalidTolerance { .. } => "--epsilon",
        _ => "--alpha/--beta/--k/--b/--gamma",
    };
    CliError::Usage(format!("{flags}: {e}"))
}

/// Fit errors about the *shape* of the input are usage errors; errors about
/// what the data turned out to contain are computation errors.
pub fn fit_error(context: &str, e: FitError) -> CliError {
    let kind = match e {
        FitError::TooFewPoints { .. }
        | FitError::NonFiniteData { .. }
        | FitError::NonIncreasingTime { .. }
        | FitError::LengthMismatch { .. } => {
            return CliError::Usage(format!("{context}: {e}"));
        }
        FitError::NonUniformSpacing { .. } => "non_uniform_spacing",
        FitError::RateMismatch { .. } => "rate_mismatch",
        FitError::AmplitudeOrdering { .. } => "amplitude_ordering",
        FitError::OffsetOrdering { .. } => "offset_ordering",
        FitError::SolverNotDecaying => "solver_not_decaying",
        FitError::ZeroVariance => "zero_variance",
    };
    CliError::Computation {
        kind,
        message: format!("{context}: {e}"),
    }
}

/// Selection errors: invalid candidate data is a usage error, threshold
/// starvation is a computation outcome.
pub fn select_error(context: &str, e: SelectError) -> CliError {
    match e {
        SelectError::AllBelowThreshold { .. } | SelectError::AllBelowThresholdForPrompt { .. } => {
            CliError::Computation {
                kind: "all_below_threshold",
                message: format!("{context}: {e}"),
            }
        }
        other => CliError::Usage(format!("{context}: {other}")),
    }
}
