//! Encoder, scoring functions, losses, regularisation and their analytic
//! gradients. Everything here is a pure function of caller-supplied buffers.

mod batch;
mod config;
mod encoder;
mod loss;
mod params;
mod regularise;
mod score;

pub use batch::{batch_forward_backward, BatchGrads, BatchInput};
pub use config::{LossKind, ModelConfig, ScoreFunction};
pub use encoder::{encode_entity, project, DropoutMasks, Role};
pub use loss::{
    adversarial_weights, log_sigmoid, log_sigmoid_loss, log_sigmoid_with_weights,
    sampled_softmax_ce_loss, sigmoid, softmax_correction, softplus, NegativeMask,
};
pub use params::{ModelParams, SharedParams};
pub use regularise::{l3_penalty, l3_penalty_grad, l3_regulariser, RegWeights};
pub use score::{score, score_backward};
