//! Robust and efficiency-adaptive nonparametric GLM estimation.
//!
//! The regression function on `[0, 1]` is represented in a B-spline basis and
//! estimated by minimizing a penalized density power divergence. The robustness
//! parameter `α` interpolates between penalized maximum likelihood (`α = 0`) and
//! L2-distance estimation (`α = 1`); both `α` and the penalty `λ` can be chosen
//! from the data.

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod family;
pub mod linalg;
pub mod loss;
pub mod pipeline;
pub mod pirls;
pub mod quadrature;
pub mod selection;
pub mod spline;

pub use error::{Error, Result};
pub use family::{DpdTerms, Family, FamilyKind};
pub use loss::{IrlsStepData, LossEval, WeightMode};
pub use pirls::{FitResult, SolverOptions};
pub use selection::SelectionReport;
pub use spline::{KnotStrategy, KnotVector, SplineBasis};
