//! Stratified gradient estimation with memory.
//!
//! - [`population`]: stratified scalar populations and synthetic round generators.
//! - [`estimators`]: the memory-type stratified estimator, its coefficients and
//!   variance theory, and the baseline estimators.
//! - [`mlp`]: a small fully connected classifier with exact backprop.
//! - [`trainer`]: the memory-type stratified gradient trainer and baselines.
//! - [`dataio`]: IDX ingestion, CSV/SVG output.
//! - [`cli`]: the `stratgrad` experiment commands.

pub mod error;
pub mod cli;
pub mod dataio;
pub mod estimators;
pub mod mlp;
pub mod population;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
