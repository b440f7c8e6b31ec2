//! Three-branch CNN on correlation tensors.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use loss::{
    loss_emce, loss_emce_grad, loss_emce_inclination, loss_range, loss_range_grad, loss_spherical, loss_spherical_grad,
    InclinationLoss,
};
pub use network::{prepare_input, Affine, DropoutMasks, Head, Network, NetworkConfig, Tape};
pub use tensor::Tensor4;
pub use train::{batch_loss, fit, joint_rmse, train_branches, train_progressive, Adam, LossTrace, Progressive, TrainConfig, TrainingSet};
