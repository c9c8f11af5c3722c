//! Wavelet-domain state-space fusion of infrared and visible images.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` for training and
//! inference, `f64` for gradient checks); the aliases below name the two
//! concrete instantiations.

pub mod autograd;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod ssm;
pub mod tensor;
pub mod train;
pub mod wavelet;

pub use autograd::{Graph, ParamGrads, Var};
pub use error::{Error, Result};
pub use nn::{Module, Parameter};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
