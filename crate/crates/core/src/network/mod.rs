//! The fusion network: domain and commonsense attention branches, layer-normalized
//! concatenation, a fused attention block, mean pooling, a dense projection and a
//! classifier head. Gradients are computed by hand in `f64`.

mod attention;
mod checkpoint;
mod config;
mod forward;
mod loss;
mod params;
mod train;

pub use attention::{cross_attention, self_attention, AttentionMap};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{KinnConfig, Variant};
pub use forward::{forward, forward_with, loss_and_gradients, loss_and_gradients_with, CrossQuery, ForwardOptions, ForwardTrace};
pub use loss::{decide, loss, loss_from_probs, probabilities, sigmoid, softmax, LossWeights};
pub use params::{AttentionWeights, KinnParams, LayerNormWeights, Linear};
pub use train::{predict, predict_all, train, train_with, Adam, EpochRecord, Example, TrainOutcome};
