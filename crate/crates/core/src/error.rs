use thiserror::Error;

use crate::model::Diagnostic;

#[derive(Debug, Error)]
pub enum GigError {
    #[error("arity mismatch: expected {expected} features, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("probe coordinate {value} on feature {feature} lies exactly on a split threshold")]
    OnThreshold { feature: usize, value: f64 },

    #[error("invalid model: {}", format_diagnostics(.0))]
    InvalidGraph(Vec<Diagnostic>),

    #[error("corner radix {radix} exceeds the configured maximum {max}")]
    RadixOverflow { radix: usize, max: usize },

    #[error("eta({k}, {j}) is undefined: need 0 <= j < k <= {max}")]
    EtaDomain { k: usize, j: usize, max: usize },

    #[error("exact Shapley enumeration supports at most {max} players, got {n}")]
    TooManyPlayers { n: usize, max: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = GigError> = std::result::Result<T, E>;
