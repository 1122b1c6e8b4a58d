//! Estimation of longitudinal interventional (in)direct mediation effects.
//!
//! The library decomposes the effect of a time-varying treatment on a final
//! outcome into a direct part and a part running through a time-varying
//! mediator, allowing treatment-induced confounding of the mediator at every
//! time point. Two halves cooperate:
//!
//! * an **estimator** ([`estimator`], [`nuisance`], [`learners`]) which
//!   cross-fits sequential regressions and propensities, pools observations
//!   over hypothetical mediator paths, and combines them into a multiply
//!   robust, asymptotically efficient estimate with influence-function-based
//!   standard errors;
//! * an **oracle** ([`oracle`]) which, for small discrete structural models,
//!   computes every population quantity exactly by enumeration — target
//!   values via two independent routes, true nuisance functions, the
//!   efficiency bound, and expansion remainders under controlled nuisance
//!   perturbations — so the estimator's algebra is verifiable to numerical
//!   precision.
//!
//! [`simulate`] ties the two together for Monte Carlo studies, and the `lmed`
//! binary exposes estimation, simulation and oracle queries on the command
//! line.

pub mod config;
pub mod data;
pub mod error;
pub mod estimator;
pub mod learners;
pub mod nuisance;
pub mod oracle;
pub mod report;
pub mod simulate;

pub use error::{Error, Result};
