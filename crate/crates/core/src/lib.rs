//! Generalized ridge estimation for nonlinear likelihood models.
//!
//! The crate fits maximum-likelihood models with a quadratic penalty
//! `lambda ||Lambda (theta - theta_H)||^2` that shrinks selected
//! coordinates toward a hypothesized value, approximates the resulting
//! finite-sample risk, and chooses the penalty strength from data. On top
//! of that sit a replication laboratory for comparing estimators and
//! inverse-probability-weighting tools whose propensity models benefit
//! from the same shrinkage.
//!
//! Modules, roughly in dependency order:
//!
//! - [`dataset`], [`param`], [`family`]: data containers, parameter
//!   layouts, and likelihood families (multinomial and binary logit,
//!   Poisson counts, Gaussian with known variance).
//! - [`penalty`], [`estimator`]: penalty construction and the damped
//!   Newton fitter.
//! - [`risk`]: first-order mean-squared-error approximation, improvement
//!   bounds, and the always-improving threshold test.
//! - [`tuner`]: unbiased-risk and cross-validation selectors over a
//!   strength grid.
//! - [`mclab`]: calibrated data-generating designs and replication
//!   studies with risk, tail, and extreme-estimate metrics.
//! - [`causal`]: inverse probability weighting for multi-valued
//!   treatments with penalized propensity fits.

pub mod causal;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod family;
pub mod linalg;
pub mod mclab;
pub mod param;
pub mod penalty;
pub mod risk;
pub mod tuner;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use estimator::{fit, fit_mle, FitResult};
pub use family::Family;
pub use param::{ParamLayout, ParamVector};
pub use penalty::{build_template, PenaltySpec, PenaltyTemplate, Weighting};
pub use risk::{ImprovementRange, MomentInputs, RiskApprox};
pub use tuner::{RiskCurve, SelectorSpec};
