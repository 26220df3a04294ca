//! Dense 2-D tensor of f64 values. Row vectors are `1×m`, scalars are `1×1`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{} = {} elements, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn row(vals: &[f64]) -> Self {
        Tensor {
            rows: 1,
            cols: vals.len(),
            data: vals.to_vec(),
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Scalar payload of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// `out = a · b` for `a: n×k`, `b: k×m`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.cols, b.rows);
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = Tensor::zeros(n, m);
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        let o_row = &mut out.data[i * m..(i + 1) * m];
        for (kk, &aik) in a_row.iter().enumerate() {
            let b_row = &b.data[kk * m..(kk + 1) * m];
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
    out
}

/// `out = aᵀ · b` for `a: n×k`, `b: n×m`, giving `k×m`. Used for weight gradients.
pub fn matmul_at(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.rows, b.rows);
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = Tensor::zeros(k, m);
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        let b_row = &b.data[i * m..(i + 1) * m];
        for (kk, &av) in a_row.iter().enumerate() {
            let o_row = &mut out.data[kk * m..(kk + 1) * m];
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out = a · bᵀ` for `a: n×m`, `b: k×m`, giving `n×k`. Used for input gradients.
pub fn matmul_bt(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.cols, b.cols);
    let (n, m, k) = (a.rows, a.cols, b.rows);
    let mut out = Tensor::zeros(n, k);
    for i in 0..n {
        let a_row = &a.data[i * m..(i + 1) * m];
        let o_row = &mut out.data[i * k..(i + 1) * k];
        for (kk, o) in o_row.iter_mut().enumerate() {
            let b_row = &b.data[kk * m..(kk + 1) * m];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = matmul(&a, &b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let a = Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(3, 4, (0..12).map(|v| v as f64).collect()).unwrap();
        let at = Tensor::from_vec(2, 3, vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(matmul_at(&a, &b).data(), matmul(&at, &b).data());

        let c = Tensor::from_vec(2, 4, (0..8).map(|v| v as f64).collect()).unwrap();
        let d = Tensor::from_vec(3, 4, (0..12).map(|v| (v * 2) as f64).collect()).unwrap();
        let dt = {
            let mut t = Tensor::zeros(4, 3);
            for i in 0..3 {
                for j in 0..4 {
                    t.set(j, i, d.get(i, j));
                }
            }
            t
        };
        assert_eq!(matmul_bt(&c, &d).data(), matmul(&c, &dt).data());
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0]).is_err());
    }
}
