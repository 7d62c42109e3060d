use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("wave vector kappa must be nonzero")]
    ZeroWaveVector,
    #[error("argument {arg} lies within {guard:e} of a tangent pole")]
    PoleProximity { arg: f64, guard: f64 },
    #[error("no sign change bracketing a root near {guess} ({what})")]
    NoBracket { what: &'static str, guess: f64 },
    #[error("stability condition violated: lhs = {lhs} > r = {r}")]
    UnstableParameters { lhs: f64, r: f64 },
    #[error("mode divisor vanishes for mode {mode}")]
    SingularMode { mode: i64 },
    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
