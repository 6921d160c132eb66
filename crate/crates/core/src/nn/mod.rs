//! Dense-tensor layer zoo with hand-derived gradients.

pub mod act;
pub mod conv;
pub mod gradcheck;
pub mod norm;
pub mod optim;
pub mod tensor;

pub use conv::{ConvGrads, ConvKernel, ConvTranspose3d, Padding};
pub use gradcheck::{grad_check, GradCheckConfig, GradReport};
pub use optim::OptimState;
pub use tensor::{Real, Tensor};
