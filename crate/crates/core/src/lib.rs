//! Numerical toolkit for the non-uniqueness problem `x^(α) = g(x)`, `x(0) = 0`,
//! with `g(0) = 0`, solved through its integral form
//! `y(t) = g(∫_T^t y(s)(t − s)^(−β) ds)` on `[T, 1]`, `β = 1 − α`.

pub mod analysis;
pub mod error;
pub mod format;
pub mod hypothesis;
pub mod nonlinearity;
pub mod quadrature;
pub mod solver;
pub mod specfun;

pub use error::{Error, Result};
pub use hypothesis::{check_certificate, search_feasible, HypothesisCertificate};
pub use nonlinearity::{NonlinearityEnvelope, NonlinearitySpec};
pub use quadrature::{GridFunction, Mesh};
pub use solver::{picard_solve, EnvelopeSet, Init};
