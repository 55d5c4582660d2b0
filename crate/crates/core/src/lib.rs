//! Explainable Bayesian-optimization workbench built around a virtual egg
//! cooking machine.
//!
//! * [`egg`]: the cooking-time model, feedback grades and sensitivity analysis.
//! * [`gp`]: Gaussian-process surrogate (squared-exponential kernel).
//! * [`bo`]: sequential Bayesian optimization with Expected Improvement.
//! * [`tntrules`]: Tune/No-Tune rule extraction from a fitted surrogate.
//! * [`render`]: rule text, bar-chart spec and natural-language renderers.
//! * [`harness`]: scenarios, sessions, scripted agents and event-log persistence.
//! * [`service`] and [`cli`]: the HTTP session service and command-line tool.

pub mod bo;
pub mod cli;
pub mod egg;
pub mod gp;
pub mod harness;
pub mod render;
pub mod service;
pub mod tntrules;

pub use egg::{EggParameters, FeedbackGrade, Param};
