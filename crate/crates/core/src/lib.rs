//! Probabilistic classifiers trained from corpora whose annotation budget is
//! spread unevenly: some examples unlabeled, some with one label, a few with
//! many.
//!
//! * [`corpus`]: data model, annotation aggregation, budget allocation,
//!   synthetic annotator pools and file I/O.
//! * [`model`]: MLP heads over fixed features, losses with exact gradients,
//!   Adam, checkpoints.
//! * [`strategies`]: cross-entropy and MixUp training strategies.
//! * [`calibrate`]: temperature scaling, smoothing and entropy-matched tuning.
//! * [`metrics`]: KL, JSD, accuracy, entropy histograms, P/R/F1, MRR.
//!
//! Inner loops (batch gradients, prediction, pool generation) run on rayon
//! with the default `parallel` feature and sequentially without it; both give
//! bit-identical results.

pub mod calibrate;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod par;
pub mod strategies;

pub use error::{Error, Result};
