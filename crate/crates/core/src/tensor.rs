//! Dense (0,4)-tensors on an n-dimensional tangent space.

use crate::error::{Error, Result};

/// A dense real (0,4)-tensor with entries `T[i][j][k][l]`, 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Tensor4 {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let at = self.idx(i, j, k, l);
        self.data[at] = v;
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max violation of the curvature-type symmetries
    /// `T_ijkl = -T_jikl = -T_ijlk = T_klij`.
    pub fn symmetry_violation(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let t = self.get(i, j, k, l);
                        worst = worst
                            .max((t + self.get(j, i, k, l)).abs())
                            .max((t + self.get(i, j, l, k)).abs())
                            .max((t - self.get(k, l, i, j)).abs());
                    }
                }
            }
        }
        worst
    }

    /// Checks antisymmetry in (i,j) and (k,l) plus the pair symmetry, scaled
    /// by the largest entry.
    pub fn require_curvature_symmetries(&self, tol: f64) -> Result<()> {
        let scale = self.max_abs().max(1.0);
        let v = self.symmetry_violation() / scale;
        if v > tol {
            return Err(Error::TensorSymmetry { violation: v });
        }
        Ok(())
    }

    /// First Bianchi residual `max |T_ijkl + T_iklj + T_iljk|`.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let s = self.get(i, j, k, l) + self.get(i, k, l, j) + self.get(i, l, j, k);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Embeds the tensor into a larger dimension, padding with zeros.  The
    /// extra directions are flat, which is exactly the curvature tensor of a
    /// metric product with a Euclidean factor.
    pub fn pad_to(&self, m: usize) -> Tensor4 {
        assert!(m >= self.n);
        let mut out = Tensor4::zeros(m);
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.n {
                    for l in 0..self.n {
                        out.set(i, j, k, l, self.get(i, j, k, l));
                    }
                }
            }
        }
        out
    }
}
