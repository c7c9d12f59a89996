//! Dense row-major f64 matrices and the handful of kernels the branches need.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UagError};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Glorot-uniform initialization from a seeded stream.
    pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Matrix { rows, cols, data }
    }

    /// `self * other`, using a blocked dgemm kernel.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(UagError::DimMismatch {
                op: "matmul",
                lhs: format!("{}x{}", self.rows, self.cols),
                rhs: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.cols,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                other.cols as isize,
                1,
            );
        }
        Ok(out)
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(UagError::DimMismatch {
                op: "matmul_tn",
                lhs: format!("{}x{}", self.rows, self.cols),
                rhs: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.cols,
                self.rows,
                other.cols,
                1.0,
                self.data.as_ptr(),
                1,
                self.cols as isize,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                other.cols as isize,
                1,
            );
        }
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(UagError::DimMismatch {
                op: "matmul_nt",
                lhs: format!("{}x{}", self.rows, self.cols),
                rhs: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.rows,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                1,
                other.cols as isize,
                0.0,
                out.data.as_mut_ptr(),
                other.rows as isize,
                1,
            );
        }
        Ok(out)
    }

    pub fn relu(&self) -> Matrix {
        let data = self.data.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Matrix {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = out.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// CSR view of a sparse row-major matrix (one-time conversion). Bag-of-words
/// feature matrices are a few dozen nonzeros per row, so multiplying through
/// the nonzeros instead of the dense layout is the difference between the
/// experiment sweeps fitting their wall-clock budgets or not.
#[derive(Debug, Clone)]
pub struct SparseFeatures {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseFeatures {
    pub fn from_matrix(x: &Matrix) -> Self {
        let (rows, cols) = (x.rows(), x.cols());
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..rows {
            for (c, &v) in x.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(c as u32);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseFeatures {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(X ∘ mask · scale) · W`, where the optional `mask` is a dense matrix
    /// the shape of `X` (values looked up only at the nonzeros) and `scale`
    /// is a uniform factor (inverted-dropout `1/p`). Accumulates over the
    /// nonzeros of each row in ascending column order.
    pub fn mm(&self, w: &Matrix, mask: Option<(&Matrix, f64)>) -> Result<Matrix> {
        if self.cols != w.rows() {
            return Err(UagError::DimMismatch {
                op: "sparse mm",
                lhs: format!("X {}x{}", self.rows, self.cols),
                rhs: format!("W {}x{}", w.rows(), w.cols()),
            });
        }
        let k = w.cols();
        let mut out = Matrix::zeros(self.rows, k);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[e] as usize;
                let v = match mask {
                    Some((m, scale)) => self.vals[e] * m.get(r, c) * scale,
                    None => self.vals[e],
                };
                if v == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(w.row(c)) {
                    *d += v * s;
                }
            }
        }
        Ok(out)
    }

    /// `(X ∘ mask · scale)ᵀ · D` with `D` dense `rows x k`; the masked
    /// transpose product that backs `dW = Xᵀ dZ`.
    pub fn tr_mm(&self, d: &Matrix, mask: Option<(&Matrix, f64)>) -> Result<Matrix> {
        if self.rows != d.rows() {
            return Err(UagError::DimMismatch {
                op: "sparse tr_mm",
                lhs: format!("X {}x{}", self.rows, self.cols),
                rhs: format!("D {}x{}", d.rows(), d.cols()),
            });
        }
        let k = d.cols();
        let mut out = Matrix::zeros(self.cols, k);
        for r in 0..self.rows {
            let src = d.row(r);
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[e] as usize;
                let v = match mask {
                    Some((m, scale)) => self.vals[e] * m.get(r, c) * scale,
                    None => self.vals[e],
                };
                if v == 0.0 {
                    continue;
                }
                let dst = out.row_mut(c);
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn matmul_small() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_transposed_variants_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Matrix::glorot(4, 5, &mut rng);
        let b = Matrix::glorot(4, 3, &mut rng);
        // a^T b computed two ways
        let direct = a.matmul_tn(&b).unwrap();
        let mut at = Matrix::zeros(5, 4);
        for r in 0..4 {
            for c in 0..5 {
                at.set(c, r, a.get(r, c));
            }
        }
        let via = at.matmul(&b).unwrap();
        for (x, y) in direct.data().iter().zip(via.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0]);
        let s = a.softmax_rows();
        for r in 0..2 {
            let sum: f64 = s.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
        let mut shifted = a.clone();
        for v in shifted.row_mut(0) {
            *v += 1000.0;
        }
        let s2 = shifted.softmax_rows();
        for (x, y) in s.row(0).iter().zip(s2.row(0)) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let a = Matrix::from_vec(1, 4, vec![0.7; 4]);
        let s = a.softmax_rows();
        for &v in s.row(0) {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }
}
