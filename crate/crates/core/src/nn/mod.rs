//! Numerical substrate: dense matrices, MLPs with exact gradients, Adam and
//! checkpoints.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod matrix;
mod mlp;

pub use adam::Adam;
pub use gradcheck::{finite_diff_grad, relative_error, DEFAULT_EPS};
pub use matrix::{gemm, Matrix, Op};
pub use mlp::{sigmoid, Activation, ForwardCache, Grads, LayerShape, Mlp};
