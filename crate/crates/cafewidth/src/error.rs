//! Crate-wide error type and result alias.

use thiserror::Error;

/// All failure modes surfaced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Architecture validation failed; `layer` is the 1-based id of the first
    /// offending layer (0 when the problem is graph-global).
    #[error("invalid architecture (layer {layer}): {reason}")]
    InvalidArch { layer: usize, reason: String },

    /// A width vector is malformed for the graph it is used with.
    #[error("invalid width: {0}")]
    InvalidWidth(String),

    /// A named width group does not exist or is not searchable.
    #[error("unknown or non-searchable group {0:?}")]
    UnknownGroup(String),

    /// Bin planning failed (no searchable groups, bad β, ...).
    #[error("invalid bin plan: {0}")]
    InvalidPlan(String),

    /// Sharing-pattern construction or degree computation failed.
    #[error("invalid sharing pattern: {0}")]
    InvalidPattern(String),

    /// Experiment or component configuration rejected.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A FLOPs budget admits no feasible width vector.
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    /// Non-finite value produced during training; `layer` is the 1-based id
    /// of the layer where it was detected (0 for the loss itself).
    #[error("numeric error (layer {layer}): {reason}")]
    Numeric { layer: usize, reason: String },

    /// Dataset file or record is malformed.
    #[error("data format error: {0}")]
    DataFormat(String),

    /// Checkpoint bytes are malformed or inconsistent.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant, used in the
    /// CLI's structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArch { .. } => "invalid_arch",
            Error::InvalidWidth(_) => "invalid_width",
            Error::UnknownGroup(_) => "unknown_group",
            Error::InvalidPlan(_) => "invalid_plan",
            Error::InvalidPattern(_) => "invalid_pattern",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InfeasibleBudget(_) => "infeasible_budget",
            Error::Numeric { .. } => "numeric",
            Error::DataFormat(_) => "data_format",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 0 success, 2 usage (handled by the arg parser), 3 invalid
    /// configuration or validation failure, 4 infeasible budget,
    /// 5 I/O or file-format failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArch { .. }
            | Error::InvalidWidth(_)
            | Error::UnknownGroup(_)
            | Error::InvalidPlan(_)
            | Error::InvalidPattern(_)
            | Error::InvalidConfig(_) => 3,
            Error::InfeasibleBudget(_) => 4,
            Error::DataFormat(_) | Error::Checkpoint(_) | Error::Io(_) | Error::Json(_) => 5,
            Error::Numeric { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
