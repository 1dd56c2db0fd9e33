use thiserror::Error;

/// Crate-wide error type. Solvers never return a "best effort" answer:
/// anything that would make the result untrustworthy is surfaced here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("floor {0} cannot be met by any feasible allocation")]
    InfeasibleFloor(String),

    #[error("floors {0} and {1} are jointly infeasible")]
    JointlyInfeasibleFloors(String, String),

    #[error("flow problem infeasible: {0}")]
    InfeasibleFlow(String),

    #[error("mode {mode} requires knob `{knob}`")]
    MissingKnob { mode: &'static str, knob: &'static str },

    #[error("knob `{knob}` = {value} outside {range}")]
    KnobOutOfRange {
        knob: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub fn format(path: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
