//! Small attentional encoder-decoder with side-constraint tags.
//!
//! Everything runs in `f64` on the CPU with hand-written gradients.

pub mod beam;
pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod params;
pub mod train;
pub mod vocab;

pub use beam::{beam_search, decode_all, Ensemble, Hypothesis, StepModel};
pub use model::{forward_loss, loss_and_grad, Example, Mode};
pub use params::{Dims, ModelConfig, Params, Tensor};
pub use train::{perplexity, train, EarlyStopper, TrainConfig, TrainOutcome};
pub use vocab::Vocab;
