//! Multilabel ensemble construction: augmented training samples, per-epoch
//! prediction snapshots from a feature-hashed linear learner, and
//! bagging/stacking ensembles selected by Hamming loss.

pub mod augment;
pub mod corpus;
pub mod distill;
pub mod ensemble;
pub mod error;
pub mod hash;
pub mod io;
pub mod learner;
pub mod matrix;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
