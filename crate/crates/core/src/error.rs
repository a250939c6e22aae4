//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed validation before any computation started.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Requested photon flux cannot cover the squeezing photon cost
    /// (Condition 4): flux must be at least (gamma/2) sinh^2(r/2).
    #[error(
        "Condition 4 violated: photon flux {flux} is below the squeezing cost {squeezing_cost} \
         (gamma = {gamma}, r = {r})"
    )]
    FluxBudget {
        flux: f64,
        gamma: f64,
        r: f64,
        squeezing_cost: f64,
    },

    /// Numerical quadrature stopped before reaching the requested tolerance.
    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    /// A state variable became non-finite during integration.
    #[error("numeric failure at step {step}: {what}")]
    Numeric { step: usize, what: String },

    /// Optimizer could not evaluate any point around the starting guess.
    #[error("coordinate search found no feasible point near the initial guess: {0}")]
    InfeasibleStart(String),

    /// Configuration file problem (syntax, unknown key, bad value).
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 3 for validation/feasibility/config,
    /// 4 for numeric failures, 1 for I/O and everything else.
    /// (Usage errors exit 2 via the argument parser.)
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::FluxBudget { .. }
            | Error::InfeasibleStart(_)
            | Error::Config(_) => 3,
            Error::Quadrature { .. } | Error::Numeric { .. } => 4,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}
