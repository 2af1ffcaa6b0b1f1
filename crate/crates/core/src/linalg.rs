//! Small dense row-major matrix and vector helpers.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("buffer of length {len} cannot form a {rows}x{cols} matrix")]
    BadBuffer {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Mismatch { expected: usize, got: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, ShapeError> {
        if data.len() != rows * cols {
            return Err(ShapeError::BadBuffer {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_symmetric(&self) -> bool
    where
        T: PartialEq,
    {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

impl<T: Real> Matrix<T> {
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>, ShapeError> {
        if x.len() != self.cols {
            return Err(ShapeError::Mismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix<T>) -> Result<Matrix<T>, ShapeError> {
        if self.cols != rhs.rows {
            return Err(ShapeError::Mismatch {
                expected: self.cols,
                got: rhs.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let idx = i * rhs.cols + j;
                    out.data[idx] += a * rhs.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &Matrix<T>) -> Result<Matrix<T>, ShapeError> {
        if self.shape() != rhs.shape() {
            return Err(ShapeError::Mismatch {
                expected: self.rows * self.cols,
                got: rhs.rows * rhs.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn l2_norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Unit-length copy of `a`; the zero vector maps to itself.
pub fn normalized<T: Real>(a: &[T]) -> Vec<T> {
    let n = l2_norm(a);
    if n == T::zero() {
        a.to_vec()
    } else {
        a.iter().map(|&v| v / n).collect()
    }
}

/// `1 - cos(a, b)`. Two zero vectors are at distance 0; a zero and a nonzero vector at distance 1.
pub fn cosine_distance<T: Real>(a: &[T], norm_a: T, b: &[T], norm_b: T) -> T {
    let zero_a = norm_a == T::zero();
    let zero_b = norm_b == T::zero();
    match (zero_a, zero_b) {
        (true, true) => T::zero(),
        (true, false) | (false, true) => T::one(),
        (false, false) => {
            let cos = (dot(a, b) / (norm_a * norm_b)).max(-T::one()).min(T::one());
            (T::one() - cos).max(T::zero())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Matrix::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_row_major(3, 1, vec![1.0, 0.0, -1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[-2.0, -2.0]);
        assert_eq!(a.mul_vec(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
    }

    #[test]
    fn shape_errors() {
        assert!(Matrix::<f64>::from_row_major(2, 2, vec![1.0]).is_err());
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(a.mul_vec(&[1.0, 2.0]).is_err());
        assert!(a.matmul(&Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn cosine_distance_edge_cases() {
        let z = [0.0f64, 0.0];
        let v = [3.0f64, 4.0];
        assert_eq!(cosine_distance(&z, 0.0, &z, 0.0), 0.0);
        assert_eq!(cosine_distance(&z, 0.0, &v, 5.0), 1.0);
        assert_eq!(cosine_distance(&v, 5.0, &v, 5.0), 0.0);
        let w = [-3.0f64, -4.0];
        assert!((cosine_distance(&v, 5.0, &w, 5.0) - 2.0).abs() < 1e-12);
    }
}
