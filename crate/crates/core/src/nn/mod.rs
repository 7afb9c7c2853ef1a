//! A small deterministic CNN inference engine: dense tensors, the layer
//! vocabulary the two network stages need, a weight blob format, and the
//! training losses (forward value plus output gradient).

pub mod blob;
pub mod blocks;
pub mod layers;
pub mod loss;
pub mod tensor;

pub use blob::{load_weight_blob, save_weight_blob, Array, ParamStore};
pub use layers::{
    batchnorm_relu, concat_depth, conv2d, deconv2d, maxpool2, softmax_channels, BatchNorm, Conv2d,
    Deconv2d,
};
pub use loss::{cross_entropy, focal_loss, l1_loss, LossConfig};
pub use tensor::{argmax_channels, Shape, Tensor};
