//! Small dense symmetric positive-definite factorization.

use crate::error::{Error, Result};

/// Relative pivot tolerance: a pivot below `PIVOT_TOL * max_k A_kk` is treated
/// as a rank deficiency.
pub const PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a `p x p` matrix, row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Vec<f64>,
    p: usize,
}

impl Cholesky {
    /// Factors the symmetric matrix `a` (row-major, only the lower triangle
    /// is read).
    pub fn factor(a: &[f64], p: usize) -> Result<Self> {
        assert_eq!(a.len(), p * p, "matrix buffer size");
        let scale = (0..p).map(|k| a[k * p + k]).fold(0.0f64, f64::max);
        let tol = PIVOT_TOL * scale;
        let mut l = vec![0.0; p * p];
        for j in 0..p {
            let mut d = a[j * p + j];
            for k in 0..j {
                d -= l[j * p + k] * l[j * p + k];
            }
            if !(d > tol) {
                return Err(Error::SingularDesign { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * p + j] = djj;
            for i in j + 1..p {
                let mut s = a[i * p + j];
                for k in 0..j {
                    s -= l[i * p + k] * l[j * p + k];
                }
                l[i * p + j] = s / djj;
            }
        }
        Ok(Cholesky { l, p })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut x = b.to_vec();
        for i in 0..p {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * p + k] * x[k];
            }
            x[i] = s / self.l[i * p + i];
        }
        for i in (0..p).rev() {
            let mut s = x[i];
            for k in i + 1..p {
                s -= self.l[k * p + i] * x[k];
            }
            x[i] = s / self.l[i * p + i];
        }
        x
    }

    /// `A^{-1}`, symmetrized.
    pub fn inverse(&self) -> Vec<f64> {
        let p = self.p;
        let mut inv = vec![0.0; p * p];
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..p {
                inv[i * p + j] = col[i];
            }
        }
        for i in 0..p {
            for j in 0..i {
                let v = 0.5 * (inv[i * p + j] + inv[j * p + i]);
                inv[i * p + j] = v;
                inv[j * p + i] = v;
            }
        }
        inv
    }
}

/// `M v` for a row-major `p x p` matrix.
pub fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let p = v.len();
    (0..p).map(|i| dot(&m[i * p..(i + 1) * p], v)).collect()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
