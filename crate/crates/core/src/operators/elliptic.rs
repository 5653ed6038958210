use nalgebra::DMatrix;

use crate::geometry::Grid;
use crate::linalg::Scalar;

/// Dirichlet Laplacian `-Δ_h` on the interior nodes of a grid: the
/// 3-point stencil in 1D and the 5-point stencil in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    grid: Grid,
    inv_h2: Vec<f64>,
}

pub fn assemble_operator(grid: &Grid) -> EllipticOperator {
    EllipticOperator::new(grid.clone())
}

impl EllipticOperator {
    pub fn new(grid: Grid) -> Self {
        let inv_h2 = grid.h().iter().map(|h| 1.0 / (h * h)).collect();
        Self { grid, inv_h2 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn diagonal(&self) -> f64 {
        self.inv_h2.iter().map(|c| 2.0 * c).sum()
    }

    /// Half bandwidth of the matrix in the natural node ordering.
    pub fn bandwidth(&self) -> usize {
        if self.grid.dim() == 1 {
            1
        } else {
            self.grid.n()[0]
        }
    }

    /// Matrix entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal();
        }
        let nx = self.grid.n()[0];
        if self.grid.dim() == 1 {
            return if i.abs_diff(j) == 1 { -self.inv_h2[0] } else { 0.0 };
        }
        let (ix, iy) = (i % nx, i / nx);
        let (jx, jy) = (j % nx, j / nx);
        if iy == jy && ix.abs_diff(jx) == 1 {
            -self.inv_h2[0]
        } else if ix == jx && iy.abs_diff(jy) == 1 {
            -self.inv_h2[1]
        } else {
            0.0
        }
    }

    /// `out = A u`.
    pub fn apply_into<T: Scalar>(&self, u: &[T], out: &mut [T]) {
        let d = self.diagonal();
        let n = self.grid.n();
        let cx = self.inv_h2[0];
        if self.grid.dim() == 1 {
            let m = n[0];
            for i in 0..m {
                let mut s = u[i] * d;
                if i > 0 {
                    s -= u[i - 1] * cx;
                }
                if i + 1 < m {
                    s -= u[i + 1] * cx;
                }
                out[i] = s;
            }
        } else {
            let (nx, ny) = (n[0], n[1]);
            let cy = self.inv_h2[1];
            for iy in 0..ny {
                for ix in 0..nx {
                    let i = ix + nx * iy;
                    let mut s = u[i] * d;
                    if ix > 0 {
                        s -= u[i - 1] * cx;
                    }
                    if ix + 1 < nx {
                        s -= u[i + 1] * cx;
                    }
                    if iy > 0 {
                        s -= u[i - nx] * cy;
                    }
                    if iy + 1 < ny {
                        s -= u[i + nx] * cy;
                    }
                    out[i] = s;
                }
            }
        }
    }

    pub fn apply<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); u.len()];
        self.apply_into(u, &mut out);
        out
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let bw = self.bandwidth();
        DMatrix::from_fn(n, n, |i, j| {
            if i.abs_diff(j) <= bw {
                self.entry(i, j)
            } else {
                0.0
            }
        })
    }

    /// Largest eigenvalue of the full stencil (closed form on rectangles).
    pub fn lambda_max(&self) -> f64 {
        self.grid
            .n()
            .iter()
            .zip(&self.inv_h2)
            .map(|(m, c)| {
                let s = (*m as f64 * std::f64::consts::PI / (2.0 * (*m as f64 + 1.0))).sin();
                4.0 * c * s * s
            })
            .sum()
    }
}
