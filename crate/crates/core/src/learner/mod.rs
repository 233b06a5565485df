//! Feature-hashed linear multilabel learner trained by SGD on binary
//! cross-entropy, emitting one validation snapshot per epoch.

mod featurize;
mod model;
mod train;

pub use featurize::{featurize, hash_counts, weigh, FeaturizerConfig, IdfWeights, NgramCounts, NgramOrder, SparseVector};
pub use model::{predict, LinearModel};
pub use train::{
    encode_sample, gradient, model_id, objective, replay_params, train, train_with, EncodedRow,
    EpochSnapshot, TrainConfig, TrainOptions, TrainRun, Trainer, ValidationSet,
};
pub use crate::store::import_snapshots;
