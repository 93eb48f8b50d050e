//! Minimal dense row-major `f64` matrix.
//!
//! The networks here are a handful of dense layers on batches of at most a
//! few hundred rows, so a plain `Vec<f64>` with hand-written kernels is all
//! the linear algebra the crate needs. Everything is sequential and
//! allocation-explicit, which keeps runs bit-reproducible.

use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Default for Array2 {
    fn default() -> Self {
        Array2::zeros(0, 0)
    }
}

impl Array2 {
    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Array2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from a flat row-major buffer. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Array2 { rows, cols, data }
    }

    /// Builds a 1×n row vector.
    pub fn row(data: Vec<f64>) -> Self {
        Array2 {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    /// Builds from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Array2 { rows: r, cols: c, data }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product `self · rhs`; shapes must agree.
    pub fn matmul(&self, rhs: &Array2) -> Array2 {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimensions differ");
        let mut out = Array2::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let lhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(lhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs`, used by the backward pass for weight gradients.
    pub fn t_matmul(&self, rhs: &Array2) -> Array2 {
        assert_eq!(self.rows, rhs.rows, "t_matmul row counts differ");
        let mut out = Array2::zeros(self.cols, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[i * rhs.cols..(i + 1) * rhs.cols];
                let out_row = &mut out.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ`, used by the backward pass for input gradients.
    pub fn matmul_t(&self, rhs: &Array2) -> Array2 {
        assert_eq!(self.cols, rhs.cols, "matmul_t column counts differ");
        let mut out = Array2::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            for j in 0..rhs.rows {
                let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
                let b_row = &rhs.data[j * rhs.cols..(j + 1) * rhs.cols];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.data[i * rhs.rows + j] = acc;
            }
        }
        out
    }

    /// Adds `other` entrywise in place.
    pub fn add_assign(&mut self, other: &Array2) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Adds `scale · other` entrywise in place.
    pub fn add_scaled(&mut self, other: &Array2, scale: f64) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// Multiplies every entry by `scale`.
    pub fn scale_in_place(&mut self, scale: f64) {
        for a in &mut self.data {
            *a *= scale;
        }
    }

    /// Returns a copy with every entry multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Array2 {
        let mut out = self.clone();
        out.scale_in_place(scale);
        out
    }

    /// Sets every entry to zero without reallocating.
    pub fn fill_zero(&mut self) {
        self.data.fill(0.0);
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_known_product() {
        let a = Array2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Array2::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.as_slice(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transpose_products_agree_with_explicit_transpose() {
        let a = Array2::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let b = Array2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        // aᵀ has shape 3x2, so t_matmul(a, a·b) must be 3x2.
        let ab = a.matmul(&b);
        let t = a.t_matmul(&ab);
        assert_eq!(t.shape(), (3, 2));
        let mt = ab.matmul_t(&b);
        assert_eq!(mt.shape(), (2, 3));
    }

    #[test]
    #[should_panic(expected = "matmul inner dimensions differ")]
    fn matmul_rejects_mismatched_shapes() {
        let a = Array2::zeros(2, 3);
        let b = Array2::zeros(2, 3);
        let _ = a.matmul(&b);
    }
}
