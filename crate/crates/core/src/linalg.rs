//! Dense lower-triangular factorization and solves for small symmetric
//! positive-definite systems. Matrices are row-major `Vec<T>` of size `n * n`.

#![allow(clippy::needless_range_loop)]

use crate::scalar::Scalar;

/// Lower Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Returns `None` if `a` is not numerically positive definite.
    pub fn factor(a: &[T], n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let mut lower = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum = sum - lower[i * n + k] * lower[j * n + k];
                }
                if i == j {
                    if !(sum > T::zero()) || !sum.is_finite() {
                        return None;
                    }
                    lower[i * n + i] = sum.sqrt();
                } else {
                    lower[i * n + j] = sum / lower[j * n + j];
                }
            }
        }
        Some(Self { n, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn at(&self, row: usize, col: usize) -> T {
        self.lower[row * self.n + col]
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut sum = x[i];
            for k in 0..i {
                sum = sum - self.lower[i * n + k] * x[k];
            }
            x[i] = sum / self.lower[i * n + i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in (i + 1)..n {
                sum = sum - self.lower[k * n + i] * x[k];
            }
            x[i] = sum / self.lower[i * n + i];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        (0..self.n).map(|i| self.lower[i * self.n + i].ln()).fold(T::zero(), |acc, v| acc + v) * two
    }

    /// Reconstructs `L Lᵀ`.
    pub fn reconstruct(&self) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut sum = T::zero();
                for k in 0..=i.min(j) {
                    sum = sum + self.lower[i * n + k] * self.lower[j * n + k];
                }
                out[i * n + j] = sum;
            }
        }
        out
    }
}
