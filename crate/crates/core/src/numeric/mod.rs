//! Dense matrices, element-wise kernels and the reverse-mode tape the
//! network is differentiated with.

mod matrix;
pub mod ops;
mod tape;

pub use matrix::{Matrix, Scalar};
pub use ops::{masked_softmax, sigmoid, Binary, Unary};
pub use tape::{Adjoints, Gradients, Tape, Var, PROB_CLAMP};

/// Standard matrix product.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> crate::Result<Matrix<T>> {
    a.matmul(b)
}
