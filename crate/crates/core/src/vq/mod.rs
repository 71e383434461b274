//! Vector-quantized autoencoder: the representation learner trained on all
//! images in the first phase.

mod loss;
mod model;
mod quantizer;

pub use loss::{cell_sq_dist, mse, vq_grads, vq_loss, VqGrads, VqLossBreakdown};
pub use model::{init_decoder, stack, train_vqvae, EpochLog, PhaseConfig, VqOutput, VqVae, VqVaeConfig};
pub use quantizer::{lookup, quantize, Codebook};
