//! Dense row-major f64 matrices and the three matmul kernels the training
//! path needs. Loop orders are chosen so inner loops run over contiguous
//! rows (saxpy style), which keeps accumulation order fixed per element
//! regardless of vector width.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
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

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Copy one column into `out` (length `rows`).
    pub fn col_into(&self, j: usize, out: &mut [f64]) {
        for i in 0..self.rows {
            out[i] = self.at(i, j);
        }
    }

    /// Write a column from a slice (length `rows`).
    pub fn set_col(&mut self, j: usize, col: &[f64]) {
        for i in 0..self.rows {
            self.set(i, j, col[i]);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// c += a * b, with a: m x k, b: k x n, c: m x n.
pub fn gemm_nn(c: &mut Mat, a: &Mat, b: &Mat) {
    assert_eq!(a.cols, b.rows, "gemm_nn inner dims");
    assert_eq!(c.rows, a.rows, "gemm_nn out rows");
    assert_eq!(c.cols, b.cols, "gemm_nn out cols");
    let k = a.cols;
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = c.row_mut(i);
        for (p, &aip) in a_row.iter().enumerate().take(k) {
            if aip == 0.0 {
                continue;
            }
            let b_row = b.row(p);
            for (cv, &bv) in c_row.iter_mut().zip(b_row.iter()) {
                *cv += aip * bv;
            }
        }
    }
}

/// c += a^T * b, with a: m x k, b: m x n, c: k x n.
pub fn gemm_tn(c: &mut Mat, a: &Mat, b: &Mat) {
    assert_eq!(a.rows, b.rows, "gemm_tn inner dims");
    assert_eq!(c.rows, a.cols, "gemm_tn out rows");
    assert_eq!(c.cols, b.cols, "gemm_tn out cols");
    for i in 0..a.rows {
        let a_row = a.row(i);
        let b_row = b.row(i);
        for (p, &aip) in a_row.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let c_row = c.row_mut(p);
            for (cv, &bv) in c_row.iter_mut().zip(b_row.iter()) {
                *cv += aip * bv;
            }
        }
    }
}

/// c += a * b^T, with a: m x n, b: k x n, c: m x k.
pub fn gemm_nt(c: &mut Mat, a: &Mat, b: &Mat) {
    assert_eq!(a.cols, b.cols, "gemm_nt inner dims");
    assert_eq!(c.rows, a.rows, "gemm_nt out rows");
    assert_eq!(c.cols, b.rows, "gemm_nt out cols");
    let n = a.cols;
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = c.row_mut(i);
        for p in 0..b.rows {
            let b_row = b.row(p);
            // 4-way split accumulation so the reduction vectorizes.
            let chunks = n / 4;
            let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for q in 0..chunks {
                let base = q * 4;
                s0 += a_row[base] * b_row[base];
                s1 += a_row[base + 1] * b_row[base + 1];
                s2 += a_row[base + 2] * b_row[base + 2];
                s3 += a_row[base + 3] * b_row[base + 3];
            }
            let mut tail = 0.0;
            for q in chunks * 4..n {
                tail += a_row[q] * b_row[q];
            }
            c_row[p] += ((s0 + s1) + (s2 + s3)) + tail;
        }
    }
}

/// Add a column vector (length rows) to every column of `m`.
pub fn add_col_broadcast(m: &mut Mat, bias: &[f64]) {
    assert_eq!(m.rows, bias.len(), "bias length");
    for i in 0..m.rows {
        let b = bias[i];
        for v in m.row_mut(i) {
            *v += b;
        }
    }
}

/// out[i] += sum over columns of m[i][..]; the bias gradient reduction.
pub fn row_sums_into(m: &Mat, out: &mut [f64]) {
    assert_eq!(m.rows, out.len(), "row_sums length");
    for i in 0..m.rows {
        out[i] += m.row(i).iter().sum::<f64>();
    }
}
