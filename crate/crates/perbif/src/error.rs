//! Crate-wide error type.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("invalid input: {0}")]
    Invalid(String),

    /// The root search certified fewer than the expected number of periodic
    /// points (with multiplicity) after all restart rounds.
    #[error("periodic-point search incomplete at level {level}: certified {found} of {expected}")]
    Incomplete { level: u32, found: u64, expected: u64 },

    #[error("ambiguous cycle grouping near z = {z}: {detail}")]
    AmbiguousGrouping { z: Complex64, detail: String },

    /// An orbit neither escaped nor could be certified bounded within the
    /// iteration budget.
    #[error("orbit undecided after {depth} iterations")]
    Undecided { depth: usize },

    #[error("preimage solving stalled at pullback step {step}")]
    PreimageStall { step: usize },

    #[error("grid field error: {0}")]
    Field(String),

    /// Root count inside a window disagrees with the boundary winding number.
    #[error("winding/count mismatch: boundary winding {winding}, located roots {roots}")]
    WindingMismatch { winding: i64, roots: i64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
