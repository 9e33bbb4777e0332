//! Classifier head, softmax cross-entropy, optimizer, training loop,
//! evaluation and checkpoints.

mod adam;
mod checkpoint;
mod eval;
mod head;
mod loss;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use eval::{evaluate, predict, predict_bundle, Prediction};
pub use head::{
    backward, forward_logits, forward_with_cache, Activation, ClassifierGrads, ClassifierParams,
    HeadCache, HiddenLayer, HiddenSpec,
};
pub use loss::{argmax, softmax, softmax_cross_entropy};
pub use train::{
    apply_step, loss_and_gradients, sharded_loss_and_gradients, train, EvalPoint, Gradients,
    ModelParams, TrainConfig, TrainOutcome, TrainReport,
};
