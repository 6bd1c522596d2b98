//! Small linear-algebra kernels: a scalar abstraction over `f64` and
//! `Complex64`, compressed sparse rows, and banded LU factorization.

mod band;
mod scalar;
mod sparse;

pub use band::{BandLu, BandMatrix};
pub use scalar::Scalar;
pub use sparse::CsrMatrix;

/// Euclidean norm of a real or complex vector.
pub fn norm2<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.abs_sqr()).sum::<f64>().sqrt()
}

/// Real inner product `Σ a_i b_i`.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
