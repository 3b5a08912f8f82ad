#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Fairness-aware pure-premium modelling.
//!
//! The crate trains claim-cost models under several fairness strategies,
//! scores them on accuracy plus group, individual and counterfactual
//! fairness, and searches the accuracy/fairness trade-off with NSGA-II
//! followed by TOPSIS selection.

pub mod causalforest;
pub mod datakit;
pub mod ensemble;
pub mod error;
pub mod fairmodels;
pub mod metrics;
pub mod moo;
pub mod predictors;
pub mod stats;

pub use error::{Error, Result};
