//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The op set is small and chosen for temporal convolutional and attention
//! networks over skeletal motion: broadcasting arithmetic, batched matrix
//! products, grouped 1-D convolution, linear upsampling, max pooling,
//! softmax, prefix sums and quaternion algebra.
//!
//! ```
//! use partret_autograd::{Tensor, Var};
//!
//! let w = Var::param(Tensor::new([2], vec![0.5, -1.0]));
//! let x = Var::constant(Tensor::new([2], vec![2.0, 3.0]));
//! let loss = w.mul(&x).sum_all().sqr();
//! let grads = loss.backward();
//! // d/dw (w.x)^2 = 2 (w.x) x = 2 * -2 * x
//! assert_eq!(grads.get(&w).unwrap().data(), &[-8.0, -12.0]);
//! ```

mod adam;
pub mod gradcheck;
mod module;
mod ops;
mod tensor;
mod var;

pub use adam::Adam;
pub use module::{prefixed, Module};
pub use tensor::Tensor;
pub use var::{Gradients, Var};

/// Scalar quaternion helpers shared with non-differentiable callers.
pub mod quat {
    pub use crate::ops::quat::{hamilton, rotate};
}
