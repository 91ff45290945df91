//! Perpetual integrals of one-dimensional diffusions: scale and speed,
//! boundary classification, the 0-1 law for `∫ f(X_s) ds` and simulation
//! of time-changed population models.

pub mod asymptotic;
pub mod classifier;
pub mod experiments;
pub mod expr;
pub mod ladder;
pub mod scale;
pub mod quadrature;
pub mod rng;
pub mod simulate;

pub use expr::{CoefficientExpr, EvalError, ParseError};
