//! Dense quantile networks: forward pass, pinball-loss gradients, Adam and training.

mod adam;
mod dense;
mod grad;
mod io;
mod train;

pub use adam::{optimizer_step, OptimizerState};
pub use dense::{DenseNet, Layer};
pub use grad::{
    backward, backward_with, batch_loss, grad_check, grad_check_params, pinball_loss, Example,
    GradCheckReport, Gradients, GRAD_CHECK_FLOOR, GRAD_CHUNK,
};
pub use io::{NET_FORMAT, NET_FORMAT_VERSION};
pub use train::{
    default_architecture, train, EpochLoss, QuantileNet, Standardization, TrainConfig, TrainExample,
    TauEncoding, TrainOutcome, DEFAULT_HIDDEN,
};
