//! Semiparametric estimation of bundle choice models.
//!
//! Agents choose among (0,0), (1,0), (0,1) and (1,1) over two goods, with an
//! interaction utility on the bundle. The crate provides simulation designs,
//! localized rank-correlation and multi-index LAD estimators for cross
//! sections, localized maximum-score and LAD estimators for panels with
//! fixed effects, bootstrap inference, bundle-effect tests and a Monte Carlo
//! harness.

pub mod data;
pub mod dgp;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lad;
pub mod lad_panel;
pub mod mlp;
pub mod optimizer;
pub mod mrc;
pub mod ms_panel;
pub mod par;
pub mod signsum;
pub mod stats;

pub use data::{Alternative, ChoiceSample, PanelChoiceSample};
pub use dgp::{Design, ModelParams};
pub use error::{Error, Result};
