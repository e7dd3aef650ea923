use thiserror::Error;

/// Errors produced by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(
        "eigen-solver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})"
    )]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("relaxation is not rank one (lambda2/lambda1 = {0:e})")]
    RankDeficit(f64),

    #[error("integration diverged at t = {t} (last valid state at t = {last_valid_t})")]
    Divergence { t: f64, last_valid_t: f64 },

    #[error("training produced a non-finite loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("minimum-norm-point iteration did not converge (best gap {gap:e})")]
    MinNormNoConvergence { gap: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("all candidate facets are degenerate")]
    DegenerateHull,
}

pub type Result<T> = std::result::Result<T, Error>;
