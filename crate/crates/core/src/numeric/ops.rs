//! Plain (untaped) element-wise functions and the masked softmax.

use super::matrix::{Matrix, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Relu,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Mul,
}

/// Logistic function evaluated in the branch form that never exponentiates
/// a positive argument.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

impl Unary {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Relu => relu(x),
            Unary::Exp => x.exp(),
        }
    }

    /// Derivative expressed through the input `x` and the output `y = f(x)`.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Unary::Tanh => T::one() - y * y,
            Unary::Sigmoid => y * (T::one() - y),
            // subgradient at exactly 0 is 0
            Unary::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Unary::Exp => y,
        }
    }
}

pub fn unary<T: Scalar>(op: Unary, x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| op.apply(v))
}

pub fn binary<T: Scalar>(op: Binary, a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    match op {
        Binary::Add => a.add(b),
        Binary::Mul => a.hadamard(b),
    }
}

/// Softmax restricted to positions where `mask` is true. Masked positions
/// come out as exactly zero.
pub fn masked_softmax<T: Scalar>(scores: &[T], mask: &[bool]) -> Result<Vec<T>> {
    if scores.len() != mask.len() {
        return Err(Error::shape(
            "masked_softmax",
            (scores.len(), 1),
            (mask.len(), 1),
        ));
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(None, |acc: Option<T>, s| Some(acc.map_or(s, |a| a.max(s))))
        .ok_or_else(|| Error::Degenerate("softmax with every position masked".into()))?;
    let mut out: Vec<T> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - max).exp() } else { T::zero() })
        .collect();
    let total: T = out.iter().copied().sum();
    for v in &mut out {
        *v = *v / total;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_definition() {
        let x = Matrix::column(vec![-1.0, 0.0, 2.0]);
        assert_eq!(unary(Unary::Relu, &x).as_slice(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_symmetry_point() {
        assert_eq!(sigmoid(0.0f64), 0.5);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!(sigmoid(-745.0f64) > 0.0);
    }

    #[test]
    fn tanh_derivative_matches_central_difference() {
        let x = 0.3f64;
        let h = 1e-6;
        let fd = ((x + h).tanh() - (x - h).tanh()) / (2.0 * h);
        let analytic = Unary::Tanh.derivative(x, x.tanh());
        assert!((fd - analytic).abs() < 1e-7);
    }

    #[test]
    fn softmax_uniform() {
        let p = masked_softmax(&[0.0f64, 0.0, 0.0], &[true; 3]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_masked_symmetric() {
        let p = masked_softmax(&[10.0f64, 10.0, -1e9], &[true, true, false]).unwrap();
        assert_eq!(p, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn softmax_reference_values() {
        // exp(1), exp(2), exp(3) normalised
        let p = masked_softmax(&[1.0f64, 2.0, 3.0], &[true; 3]).unwrap();
        let expected = [0.0900, 0.2447, 0.6652];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_all_masked_is_degenerate() {
        let err = masked_softmax(&[1.0f64, 2.0], &[false, false]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }
}
