//! Numerical toolkit for the Temperley-Lieb category at loop parameter
//! `delta = q + 1/q`: diagram calculus, Jones-Wenzl projections, the
//! radial Gram-matrix recursion, the chi_1-commutator coefficient model,
//! and a brute-force dense-matrix oracle that cross-checks all of it on
//! concrete tensor powers of C^N.

pub mod commutator;
pub mod diagram;
pub mod error;
pub mod fiber;
pub mod gram;
pub mod jones_wenzl;
pub mod linalg;
pub mod scalars;
pub mod suite;

pub use error::Error;
pub use scalars::ScalarContext;

pub type Result<T> = std::result::Result<T, Error>;
