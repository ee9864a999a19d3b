use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A scalar or combinatorial parameter is outside its admissible domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// Inner arities of a composition (or similar op) do not match.
    #[error("arity mismatch: {0}")]
    ArityMismatch(String),

    /// A dense-matrix computation would exceed the strand budget.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// A numerical kernel has no clear spectral gap between kept and
    /// discarded singular values, so its rank cannot be trusted.
    #[error("numerical rank ambiguity: {0}")]
    RankAmbiguity(String),

    /// An eigenvalue that must be a root of unity is too far from every
    /// candidate root.
    #[error("eigenvalue snap failure: {0}")]
    EigenSnap(String),

    /// A Gram block has a non-positive diagonal entry at block n, row p.
    #[error("non-positive diagonal entry in G_{n} at p={p}")]
    NonPositiveDiagonal { n: u32, p: u32 },

    /// No basis eigenvector carries the requested rotation eigenvalue.
    #[error("no eigenvector with requested rotation eigenvalue: {0}")]
    NoSuchEigenbranch(String),
}
