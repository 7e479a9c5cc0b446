//! Row-major dense matrix and fixed-order reductions.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<T>>", into = "Vec<Vec<T>>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dim("matrix data length", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; every row must have the same length.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            check_dim("matrix row length", m, r.len())?;
            data.extend(r);
        }
        Ok(Self {
            rows: n,
            cols: m,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise sum, used by the tree reductions.
    pub fn add(&self, other: &Self) -> Self {
        debug_assert!(self.same_shape(other));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| if x.abs() > acc { x.abs() } else { acc })
    }
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for Matrix<T> {
    type Error = Error;

    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        Matrix::from_rows(rows)
    }
}

impl<T: Scalar> From<Matrix<T>> for Vec<Vec<T>> {
    fn from(m: Matrix<T>) -> Self {
        m.to_rows()
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

const PAIRWISE_LEAF: usize = 8;

/// Sum with a fixed binary-tree association order.
///
/// The split points depend only on the length, so the result is identical
/// across runs and worker counts.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().fold(T::zero(), |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Tree reduction over arbitrary items with the same split rule as [`pairwise_sum`].
pub fn pairwise_reduce<I: Clone>(items: &[I], combine: &impl Fn(&I, &I) -> I) -> Option<I> {
    match items.len() {
        0 => None,
        1 => Some(items[0].clone()),
        n => {
            let mid = n / 2;
            let left = pairwise_reduce(&items[..mid], combine)?;
            let right = pairwise_reduce(&items[mid..], combine)?;
            Some(combine(&left, &right))
        }
    }
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    pairwise_sum(xs) / T::from_usize_lossy(xs.len())
}
