//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar or structural parameter violates its documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two objects that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A requested allocation or enumeration exceeds the configured cap.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// A container file is malformed, truncated, or has the wrong version.
    #[error("format error: {0}")]
    Format(String),

    /// A configuration file could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// An artifact refers to a model other than the one supplied.
    #[error("hash mismatch: {0}")]
    HashMismatch(String),

    /// Power iteration ran out of iterations; carries the last estimate.
    #[error("power iteration did not converge after {iters} iterations (last estimate {estimate:.6e}, relative change {rel_change:.3e})")]
    NoConvergence {
        estimate: f64,
        iters: usize,
        rel_change: f64,
    },

    /// The iterative solver's objective blew past its safeguard.
    #[error("divergence detected at iteration {iter}: objective {objective:.6e} exceeds safeguard {safeguard:.6e}")]
    Divergence {
        iter: usize,
        objective: f64,
        safeguard: f64,
    },

    /// Training encountered a non-finite loss.
    #[error("non-finite loss at iteration {iter} (gamma {gamma:.4}); last finite loss {last_loss:.6e}")]
    NonFiniteLoss {
        iter: usize,
        gamma: f64,
        last_loss: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
