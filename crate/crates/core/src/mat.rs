//! Dense row-major `f64` matrices.
//!
//! This is deliberately a small kernel set: everything the training code
//! needs and nothing more. No BLAS, no views, no broadcasting.

use crate::error::{Error, Result};

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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "from_vec",
                format!("{}x{} needs {} entries, got {}", rows, cols, rows * cols, data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from nested rows; panics on ragged input (test/fixture helper).
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// self += s * other
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// C = A * B.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::dim(
            "matmul",
            format!("{}x{} * {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    // i-k-j order: the inner loop runs over contiguous rows of B and C.
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = &mut c.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
        }
    }
    Ok(c)
}

/// C = A * B^T. Inner loop is a dot product of two contiguous rows.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::dim(
            "matmul_nt",
            format!("{}x{} * ({}x{})^T", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = &mut c.data[i * b.rows..(i + 1) * b.rows];
        for (j, cv) in c_row.iter_mut().enumerate() {
            let b_row = &b.data[j * b.cols..(j + 1) * b.cols];
            *cv = dot(a_row, b_row);
        }
    }
    Ok(c)
}

/// C = A^T * B.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::dim(
            "matmul_tn",
            format!("({}x{})^T * {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let a_row = a.row(k);
        let b_row = b.row(k);
        for (i, &aki) in a_row.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let c_row = &mut c.data[i * b.cols..(i + 1) * b.cols];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aki * bv;
            }
        }
    }
    Ok(c)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four partial sums so the compiler can keep independent FMA chains.
    let mut s = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        s[0] += a[i] * b[i];
        s[1] += a[i + 1] * b[i + 1];
        s[2] += a[i + 2] * b[i + 2];
        s[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    s[0] + s[1] + s[2] + s[3] + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    /// Naive triple-loop product, kept independent of the library path.
    fn matmul_reference(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    fn max_rel_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn matmul_identity() {
        let mut rng = Rng::from_seed_stream(1, 0);
        let a = rng.standard_normal_matrix(3, 3);
        let c = matmul(&Matrix::identity(3), &a).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn matmul_scalar() {
        let a = Matrix::from_rows(&[&[2.0]]);
        let b = Matrix::from_rows(&[&[3.0]]);
        assert_eq!(matmul(&a, &b).unwrap().get(0, 0), 6.0);
    }

    #[test]
    fn matmul_matches_triple_loop_reference() {
        let mut rng = Rng::from_seed_stream(42, 0);
        let a = rng.standard_normal_matrix(5, 4);
        let b = rng.standard_normal_matrix(4, 3);
        let c = matmul(&a, &b).unwrap();
        assert!(max_rel_diff(&c, &matmul_reference(&a, &b)) < 1e-13);
    }

    #[test]
    fn matmul_dimension_mismatch_errors() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn matmul_variants_match_reference() {
        let mut rng = Rng::from_seed_stream(7, 0);
        let a = rng.standard_normal_matrix(6, 4);
        let b = rng.standard_normal_matrix(5, 4);
        let nt = matmul_nt(&a, &b).unwrap();
        assert!(max_rel_diff(&nt, &matmul_reference(&a, &b.transpose())) < 1e-13);

        let c = rng.standard_normal_matrix(6, 5);
        let tn = matmul_tn(&a, &c).unwrap();
        assert!(max_rel_diff(&tn, &matmul_reference(&a.transpose(), &c)) < 1e-13);
    }

    #[test]
    fn frobenius_norm_cases() {
        assert_eq!(Matrix::zeros(4, 7).frobenius_norm(), 0.0);
        let s = 6;
        assert!((Matrix::identity(s).frobenius_norm() - (s as f64).sqrt()).abs() < 1e-15);
        let m = Matrix::from_rows(&[&[3.0, 4.0]]);
        assert!((m.frobenius_norm() - 5.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn matmul_associative(seed in 0u64..1000) {
            let mut rng = Rng::from_seed_stream(seed, 0);
            let a = rng.standard_normal_matrix(4, 3);
            let b = rng.standard_normal_matrix(3, 5);
            let c = rng.standard_normal_matrix(5, 2);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            prop_assert!(max_rel_diff(&left, &right) < 1e-10);
        }
    }
}
