use rand::Rng;

use crate::numeric::{Matrix, Scalar};

/// Glorot/Xavier uniform: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, limit, rng)
}

/// `U(-0.05, 0.05)`, the usual embedding-layer initialiser.
pub fn embedding_uniform<T: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    uniform(rows, cols, 0.05, rng)
}

fn uniform<T: Scalar, R: Rng>(rows: usize, cols: usize, limit: f64, rng: &mut R) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| T::lit(rng.gen_range(-limit..limit)))
}
