//! Dense row-major matrices.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "tensor {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor { shape: [rows, cols], data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            shape: [rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Tensor {
        Tensor {
            shape: [rows, cols],
            data: vec![v; rows * cols],
        }
    }

    pub fn row_vector(v: Vec<f64>) -> Tensor {
        Tensor {
            shape: [1, v.len()],
            data: v,
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::row_vector(vec![v])
    }

    /// Stacks equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Tensor> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::invalid(format!("row of length {} in a {cols}-column tensor", r.len())));
            }
            data.extend_from_slice(r);
        }
        Tensor::new(rows.len(), cols, data)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (n, k, m) = (self.rows(), self.cols(), other.cols());
        debug_assert_eq!(k, other.rows());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let o = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b = &other.data[p * m..(p + 1) * m];
                for (x, y) in o.iter_mut().zip(b) {
                    *x += a * y;
                }
            }
        }
        Tensor { shape: [n, m], data: out }
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Tensor) -> Tensor {
        let (n, k, m) = (self.rows(), self.cols(), other.rows());
        debug_assert_eq!(k, other.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a = self.row(i);
            for j in 0..m {
                out[i * m + j] = a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        Tensor { shape: [n, m], data: out }
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Tensor) -> Tensor {
        let (k, n, m) = (self.rows(), self.cols(), other.cols());
        debug_assert_eq!(k, other.rows());
        let mut out = vec![0.0; n * m];
        for p in 0..k {
            let a = self.row(p);
            let b = other.row(p);
            for (i, &x) in a.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let o = &mut out[i * m..(i + 1) * m];
                for (y, z) in o.iter_mut().zip(b) {
                    *y += x * z;
                }
            }
        }
        Tensor { shape: [n, m], data: out }
    }

    pub fn transpose(&self) -> Tensor {
        let (n, m) = (self.rows(), self.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Tensor { shape: [m, n], data: out }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree() {
        let a = Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::new(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let ab = a.matmul(&b);
        assert_eq!(ab.data(), &[58.0, 64.0, 139.0, 154.0]);
        assert_eq!(a.matmul_t(&b.transpose()), ab);
        assert_eq!(a.transpose().t_matmul(&b), ab);
        assert!(Tensor::new(2, 2, vec![1.0]).is_err());
    }
}
