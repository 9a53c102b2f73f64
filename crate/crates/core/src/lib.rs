//! Bayesian stratification of heavy-tailed count data.
//!
//! The pipeline bins a count range with a MAP-optimal partition
//! ([`stratify`]), tunes the partition prior by cross-validation
//! ([`select`]), builds count-balanced minibatch plans ([`sampling`]),
//! provides a bin-aware training loss ([`loss`]) and reports per-bin and
//! pooled errors ([`eval`]). [`synth`] wires all of it into a small
//! end-to-end benchmark on synthetic data.

pub mod counts;
mod error;
pub mod eval;
pub mod json;
pub mod loss;
pub mod rng;
pub mod sampling;
pub mod select;
pub mod stratify;
pub mod synth;

pub use counts::{build_histogram, ingest_counts, CountHistogram, CountRecord};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalReport, PredictionRecord};
pub use loss::LossConfig;
pub use sampling::{BatchPlan, BinAssignment, Scheme};
pub use select::{GammaSelection, GridSpec};
pub use stratify::{Bin, LikelihoodKind, Partition, PriorConfig};
