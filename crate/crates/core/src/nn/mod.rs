//! Network primitives with explicit forward/backward passes.

pub mod activation;
pub mod adam;
pub mod affine;
pub mod categorical;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod params;
pub mod real;
pub mod tensor;

pub use adam::Adam;
pub use affine::{affine_forward, Affine};
pub use categorical::{categorical, categorical_mode, CategoricalSample};
pub use conv::{conv2d_forward, conv_out_dim, Conv2d, ConvCache};
pub use lstm::{lstm_step, Lstm, LstmCache, LstmSeq};
pub use params::{ParamId, ParamSet};
pub use real::{gemm, Real};
pub use tensor::Tensor;
