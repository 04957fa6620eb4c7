use thiserror::Error;

/// Errors produced by state constructors, conditional maps and the oracle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input outside an operation's domain (negative mean photon number,
    /// reflectivity outside (0, 1), ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A value left the representable range of f64, e.g. a Laguerre
    /// polynomial overflowing at a large negative argument.
    #[error("range error: {0}")]
    Range(String),

    /// Post-selection on a detector outcome of probability zero; the click
    /// probability for the requested outcome is 0.
    #[error("impossible outcome: {0}")]
    ImpossibleOutcome(String),

    /// Parameter combination not covered by the requested closed form.
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    /// Density-matrix cutoff too small to hold the requested state.
    #[error("insufficient cutoff: trace deficit {deficit:.3e}")]
    InsufficientCutoff { deficit: f64 },

    /// The truncated down-conversion propagator failed its unitarity
    /// validation on the retained low-excitation block.
    #[error("truncation leakage: max |u\u{2020}u - 1| = {deviation:.3e} on the validated block")]
    TruncationLeakage { deviation: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
