//! Difference-in-differences estimation with flexible covariate adjustment.
//!
//! The centerpiece is the intersection DiD estimator (DID-INT): a cell-dummy
//! regression with covariates interacted by group, time, or both, whose cell
//! coefficients are long-differenced against the period right before
//! treatment and aggregated into an overall ATT. Around it sit the
//! comparison estimators it is usually evaluated against (two-way fixed
//! effects, the cohort 2x2 estimator with doubly-robust adjustment, the
//! imputation estimator, and the FLEX regression), a model-selection ladder
//! that picks a covariate functional form from pre-trend evidence,
//! cluster-robust inference, and a seeded Monte Carlo engine for bias
//! studies on synthetic panels.

pub mod dataset;
pub mod design;
pub mod estimators;
pub mod inference;
pub mod linalg;
pub mod selection;
pub mod simulation;
pub mod svg;

mod error;

pub use dataset::{CellIndex, Observation, PanelDataset, TreatmentSchedule};
pub use design::CovariateForm;
pub use error::{Error, Result};
pub use estimators::{AttCell, EstimateReport};
