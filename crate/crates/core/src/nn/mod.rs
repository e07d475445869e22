//! Minimal differentiable network substrate: dense tensors, linear,
//! convolution and transposed-convolution layers, exact backpropagation and
//! the Adam optimizer.

mod activation;
mod adam;
mod layer;
mod network;
mod scalar;
mod tensor;

pub use activation::Activation;
pub use adam::{AdamConfig, AdamReport, AdamState};
pub use layer::{layer_backward, ConvGeometry, Geometry, Layer, LayerGrads, LayerKind};
pub use network::{Network, NetworkGrads, Role};
pub use scalar::{matmul, Scalar};
pub use tensor::Tensor;
