//! Minimal row-major matrix used by the networks and the optimizer.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_at(&mut self, r: usize, c: usize, v: F) {
        let i = r * self.cols + c;
        self.data[i] = self.data[i] + v;
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn scale(&mut self, s: F) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    pub fn sub_assign(&mut self, other: &Mat<F>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a - *b;
        }
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// y = self · x (self is rows×cols, x has len cols).
    pub fn mat_vec(&self, x: &[F], y: &mut [F]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = F::zero();
            for (w, xv) in row.iter().zip(x) {
                acc = acc + *w * *xv;
            }
            y[r] = acc;
        }
    }

    /// y = selfᵀ · x (x has len rows, y has len cols). Used for backprop.
    pub fn mat_vec_t(&self, x: &[F], y: &mut [F]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        for v in y.iter_mut() {
            *v = F::zero();
        }
        for r in 0..self.rows {
            let row = self.row(r);
            let xr = x[r];
            for (yc, w) in y.iter_mut().zip(row) {
                *yc = *yc + *w * xr;
            }
        }
    }

    /// self += outer(x, y) · scale, with x indexing rows and y columns.
    pub fn add_outer(&mut self, x: &[F], y: &[F], scale: F) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        for r in 0..self.rows {
            let xr = x[r] * scale;
            let row = self.row_mut(r);
            for (w, yc) in row.iter_mut().zip(y) {
                *w = *w + xr * *yc;
            }
        }
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}
