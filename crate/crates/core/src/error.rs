use thiserror::Error;

/// Errors raised by the reconstruction pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    #[error(
        "gap collapse at step {step}, segment {segment}: gap {gap:e} fell below {floor:e}; \
         the Euler step is too large, increase the step count"
    )]
    GapCollapse {
        step: usize,
        segment: usize,
        gap: f64,
        floor: f64,
    },

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("CFL condition violated: dt = {dt:e} exceeds the stable limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("insufficient mass: profile carries {available}, the fleet needs {required}")]
    InsufficientMass { available: f64, required: f64 },

    #[error("relative error undefined for an observation vector of zero norm")]
    ZeroNorm,

    #[error("space-time domains do not overlap")]
    DisjointDomains,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
