//! Group-sequential clinical trial design: frequentist boundary families,
//! conjugate-normal Bayesian stopping rules, decision-theoretic backward
//! induction, calibration to type I error targets, and seeded Monte Carlo
//! operating characteristics.

pub mod bayes;
pub mod calibration;
pub mod decision;
pub mod engine;
pub mod error;
pub mod frequentist;
pub mod num;
pub mod simulation;

pub use engine::{BoundarySet, BoundarySource, DesignSchedule, GridSpec, StopOutcome};
pub use error::{Error, Result};
