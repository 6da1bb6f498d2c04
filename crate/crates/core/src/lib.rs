//! Bayesian zero-inflated negative binomial regression for sample-by-feature
//! count matrices, with group-level differential abundance and covariate
//! selection through spike-and-slab priors.

pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod likelihood;
pub mod normalization;
pub mod sampler;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
