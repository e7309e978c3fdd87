//! A small reverse-mode tensor engine with the 1D layers the CycleGAN
//! needs, and an Adam optimizer.

mod conv;
mod float;
pub mod gradcheck;
mod layers;
mod norm;
mod ops;
mod optim;
mod tensor;

pub use conv::{conv1d, conv_out_len, conv_transpose1d, conv_transpose_out_len, reflection_pad1d};
pub use float::Float;
pub use layers::{
    count_params, named_params, named_tensors, BatchNorm1d, Conv1d, Conv1dSpec, ConvTranspose1d, Ctx, Dense,
    Dropout, Init, Module, PaddingMode, TensorKind,
};
pub use norm::{batch_norm, channel_affine, dropout, BatchNormConfig};
pub use optim::{Adam, OptimizerState};
pub use tensor::{is_grad_enabled, no_grad, Tensor};
