//! Tiered transit pricing: demand and cost fitting, bundling strategies and
//! capture metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundling;
pub mod ced;
pub mod cost;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod logit;
pub mod market;
pub mod stats;

pub use error::{Error, Result};
