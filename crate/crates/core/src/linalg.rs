//! Dense complex vectors and column-major matrices.

use num_complex::Complex64;

use crate::error::{LisError, Result};

/// `a^H b`.
#[inline]
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

#[inline]
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(alpha: f64, x: &[Complex64]) -> Vec<Complex64> {
    x.iter().map(|z| z * alpha).collect()
}

/// Column-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<Complex64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for (p, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(LisError::DimensionMismatch(format!(
                    "column {p} has length {}, expected {rows}",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Ok(CMatrix {
            rows,
            cols: columns.len(),
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
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[c * self.rows + r] = v;
    }

    #[inline]
    pub fn column(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    #[inline]
    pub fn column_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn row(&self, r: usize) -> Vec<Complex64> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    /// Squared Euclidean norm of row `r`.
    pub fn row_norm_sqr(&self, r: usize) -> f64 {
        (0..self.cols).map(|c| self.get(r, c).norm_sqr()).sum()
    }

    pub fn frobenius_sqr(&self) -> f64 {
        norm_sqr(&self.data)
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension");
        let mut y = vec![Complex64::new(0.0, 0.0); self.rows];
        for (c, &xc) in x.iter().enumerate() {
            axpy(xc, self.column(c), &mut y);
        }
        y
    }

    /// `A^H x`
    pub fn adjoint_mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.rows, "adjoint_mul_vec dimension");
        (0..self.cols).map(|c| dot(self.column(c), x)).collect()
    }

    /// `||A^H x||^2 = sum_c |a_c^H x|^2`
    pub fn adjoint_norm_sqr(&self, x: &[Complex64]) -> f64 {
        assert_eq!(x.len(), self.rows, "adjoint_norm_sqr dimension");
        (0..self.cols).map(|c| dot(self.column(c), x).norm_sqr()).sum()
    }

    /// `A^H B`
    pub fn adjoint_mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, other.rows, "adjoint_mul dimension");
        let mut out = CMatrix::zeros(self.cols, other.cols);
        for q in 0..other.cols {
            for p in 0..self.cols {
                out.set(p, q, dot(self.column(p), other.column(q)));
            }
        }
        out
    }

    /// `||A^H B||_F^2` without materializing the product.
    pub fn cross_frobenius_sqr(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.rows, other.rows, "cross_frobenius dimension");
        let mut acc = 0.0;
        for q in 0..other.cols {
            let bq = other.column(q);
            for p in 0..self.cols {
                acc += dot(self.column(p), bq).norm_sqr();
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dot_conjugates_left_operand() {
        let a = [c(0.0, 1.0)];
        let b = [c(0.0, 1.0)];
        assert_eq!(dot(&a, &b), c(1.0, 0.0));
    }

    #[test]
    fn rows_columns_and_products_agree() {
        let a = CMatrix::from_columns(
            3,
            &[
                vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)],
                vec![c(0.5, -0.5), c(2.0, 0.0), c(0.0, -3.0)],
            ],
        )
        .unwrap();
        assert_eq!(a.row(1), vec![c(0.0, 2.0), c(2.0, 0.0)]);
        assert!((a.row_norm_sqr(2) - (2.0 + 9.0)).abs() < 1e-15);
        let x = [c(1.0, 1.0), c(-2.0, 0.5)];
        let y = a.mul_vec(&x);
        for r in 0..3 {
            let want = a.get(r, 0) * x[0] + a.get(r, 1) * x[1];
            assert!((y[r] - want).norm() < 1e-14);
        }
        let g = a.adjoint_mul(&a);
        assert!((g.get(0, 0).re - a.column(0).iter().map(|z| z.norm_sqr()).sum::<f64>()).abs() < 1e-14);
        let fro: f64 = (0..2).flat_map(|p| (0..2).map(move |q| (p, q))).map(|(p, q)| g.get(p, q).norm_sqr()).sum();
        assert!((a.cross_frobenius_sqr(&a) - fro).abs() < 1e-12);
        assert!((a.adjoint_norm_sqr(&y) - norm_sqr(&a.adjoint_mul_vec(&y))).abs() < 1e-12);
    }

    #[test]
    fn ragged_columns_are_rejected() {
        assert!(CMatrix::from_columns(2, &[vec![c(1.0, 0.0)]]).is_err());
    }
}
