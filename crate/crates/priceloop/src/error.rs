use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A specification violates its own invariants (bad bounds, mismatched
    /// lengths, parameters that make the model infeasible by construction).
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A model was well-formed but has no feasible solution.
    #[error("infeasible {what}: {detail}")]
    Infeasible { what: String, detail: String },

    /// A model is unbounded below.
    #[error("unbounded {what}: {detail}")]
    Unbounded { what: String, detail: String },

    /// The solver backend failed or hit a limit without an optimum.
    #[error("solver: {0}")]
    Solver(String),

    /// A post-solve audit rejected the returned solution.
    #[error("audit: {0}")]
    Audit(String),

    /// Ill-formed or inconsistent input data.
    #[error("data: {0}")]
    Data(String),

    /// Ill-formed or inconsistent experiment configuration.
    #[error("config: {0}")]
    Config(String),

    /// Numerical breakdown (failed factorization, lost positive
    /// semidefiniteness).
    #[error("numerical: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
