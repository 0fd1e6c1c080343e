//! Point-in-time relational feature synthesis and a fraud scoring
//! pipeline built on top of it.
//!
//! The crate is organized around a small set of stages:
//!
//! - [`entityset`]: typed in-memory tables plus parent-child
//!   relationships, with per-parent indexes sorted by time.
//! - [`primitives`]: the aggregation and transform functions that get
//!   stacked into features.
//! - [`synthesis`]: feature enumeration (depth <= 2), cutoff policies,
//!   and the incremental matrix engine that computes every feature
//!   strictly before each row's cutoff time.
//! - [`dataprep`]: fraud report matching, card subsampling, and the
//!   stratified train/tune/test split.
//! - [`model`]: a from-scratch random forest with class-balanced
//!   weighting and deterministic per-tree seeding.
//! - [`evaluation`]: decision-threshold tuning under a recall floor,
//!   amount weighting, and the financial cost model.
//! - [`datagen`]: a synthetic card-transaction generator whose fraud
//!   is only separable through history-derived features.
//! - [`pipeline`]: configuration, artifact formats, and the end-to-end
//!   experiment driver used by the CLI.
//!
//! Everything downstream of a seed is deterministic: same inputs, same
//! bytes out, regardless of thread count.

pub mod datagen;
pub mod dataprep;
pub mod entityset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod pipeline;
pub mod primitives;
pub mod synthesis;

pub use error::{Error, Result};
