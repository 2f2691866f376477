//! Minimal reverse-mode layer set: convolution, pooling, batch norm,
//! activations, losses, and optimizers.

pub mod activation;
pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod norm;
pub mod optim;
pub mod param;
pub mod pool;
pub mod sequential;

pub use activation::{relu, sigmoid};
pub use conv::{conv2d, conv2d_backward, conv_out_len};
pub use loss::{cross_entropy_loss, l1_loss, mse_loss, LossOutput};
pub use norm::Mode;
pub use optim::{Optimizer, OptimizerKind};
pub use param::{Param, ParamId, ParamStore};
pub use pool::{maxpool2, maxpool2_backward};
pub use sequential::{Layer, Sequential, Tape};
