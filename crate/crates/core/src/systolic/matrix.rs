use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{bail, Result};

/// Dense row-major integer matrix used by the functional simulations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> i64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            bail!(Shape, "ragged matrix rows");
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| (r == c) as i64)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Zero-pads (or crops) to `rows x cols`.
    pub fn resized(&self, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| {
            if r < self.rows && c < self.cols {
                self[(r, c)]
            } else {
                0
            }
        })
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.data
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = i64;

    fn index(&self, (r, c): (usize, usize)) -> &i64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut i64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Pre-skews a square matrix: `W'[r][c] = W[(r + c) mod N][c]`, i.e. column
/// `c` rotated upward by `c`.
pub fn interleave(w: &Matrix) -> Result<Matrix> {
    if !w.is_square() {
        bail!(Shape, "interleave needs a square matrix, got {}x{}", w.rows, w.cols);
    }
    let n = w.rows;
    Ok(Matrix::from_fn(n, n, |r, c| w[((r + c) % n, c)]))
}

/// Inverse of [`interleave`].
pub fn deinterleave(w: &Matrix) -> Result<Matrix> {
    if !w.is_square() {
        bail!(Shape, "deinterleave needs a square matrix, got {}x{}", w.rows, w.cols);
    }
    let n = w.rows;
    Ok(Matrix::from_fn(n, n, |r, c| w[((r + n - c % n) % n, c)]))
}
