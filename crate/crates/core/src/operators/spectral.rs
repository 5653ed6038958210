//! Low eigenpairs of the discrete Laplacian and the fractional-power norms
//! `|w|_k = |A^{k/2} w|` they induce.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::elliptic::EllipticOperator;
use crate::error::{invalid, Error, Result};
use crate::geometry::Grid;
use crate::linalg::BandedLu;

/// Orthonormal (in the discrete L2 product) eigenvectors of `A` with
/// ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    grid: Grid,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Node counts up to this size use a dense symmetric eigensolver.
    pub dense_limit: usize,
    /// Relative residual target `|A e - λ e| <= tol λ`.
    pub tol: f64,
    /// Block size of the shift-invert Krylov iteration.
    pub block: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            dense_limit: 1600,
            tol: 1e-8,
            block: 4,
        }
    }
}

pub fn spectral_basis(op: &EllipticOperator, k: usize) -> Result<SpectralBasis> {
    spectral_basis_with(op, k, &SpectralOptions::default())
}

pub fn spectral_basis_with(
    op: &EllipticOperator,
    k: usize,
    opts: &SpectralOptions,
) -> Result<SpectralBasis> {
    let n = op.len();
    if k == 0 {
        return invalid("the basis needs at least one mode");
    }
    if k > n {
        return invalid(format!("requested {k} modes but the grid has {n} nodes"));
    }
    let (values, vectors) = if n <= opts.dense_limit {
        dense_pairs(op, k)
    } else {
        krylov_pairs(op, k, opts)?
    };
    let scale = 1.0 / op.grid().cell_volume().sqrt();
    let eigenvectors = vectors
        .into_iter()
        .map(|mut v| {
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let big = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let first = v.iter().find(|x| x.abs() > 1e-8 * big).copied().unwrap_or(1.0);
            let s = first.signum() * scale / nrm;
            v.iter_mut().for_each(|x| *x *= s);
            v
        })
        .collect();
    let basis = SpectralBasis {
        grid: op.grid().clone(),
        eigenvalues: values,
        eigenvectors,
    };
    let residuals = basis.residuals(op);
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > opts.tol.max(1e-8) {
        return Err(Error::EigenNonConvergence {
            worst_residual: worst,
            residuals,
        });
    }
    Ok(basis)
}

fn sorted_pairs(values: &[f64], vectors: &DMatrix<f64>, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let vals = order[..k].iter().map(|i| values[*i]).collect();
    let vecs = order[..k]
        .iter()
        .map(|i| vectors.column(*i).iter().copied().collect())
        .collect();
    (vals, vecs)
}

fn dense_pairs(op: &EllipticOperator, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(op.dense());
    sorted_pairs(eig.eigenvalues.as_slice(), &eig.eigenvectors, k)
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Block Krylov iteration on `A^{-1}` with full reorthogonalization and
/// Rayleigh-Ritz extraction on `A`.
fn krylov_pairs(
    op: &EllipticOperator,
    k: usize,
    opts: &SpectralOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = op.len();
    let lu = BandedLu::factor(n, op.bandwidth(), |i, j| op.entry(i, j))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let bs = opts.block.max(1);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut block: Vec<Vec<f64>> = (0..bs)
        .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
        .collect();
    let mut last_residuals = Vec::new();
    loop {
        for mut v in block.drain(..) {
            orthogonalize(&mut v, &basis);
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 1e-10 && basis.len() < n {
                v.iter_mut().for_each(|x| *x /= nrm);
                basis.push(v);
            }
        }
        let m = basis.len();
        if m >= k + bs || m == n {
            let av: Vec<Vec<f64>> = basis.iter().map(|v| op.apply(v)).collect();
            let h = DMatrix::from_fn(m, m, |i, j| {
                let s: f64 = basis[i].iter().zip(&av[j]).map(|(x, y)| x * y).sum();
                let t: f64 = basis[j].iter().zip(&av[i]).map(|(x, y)| x * y).sum();
                0.5 * (s + t)
            });
            let eig = SymmetricEigen::new(h);
            let (vals, coeffs) = sorted_pairs(eig.eigenvalues.as_slice(), &eig.eigenvectors, k);
            let vecs: Vec<Vec<f64>> = coeffs
                .iter()
                .map(|c| {
                    let mut y = vec![0.0; n];
                    for (ci, b) in c.iter().zip(&basis) {
                        y.iter_mut().zip(b).for_each(|(u, w)| *u += ci * w);
                    }
                    y
                })
                .collect();
            last_residuals = vecs
                .iter()
                .zip(&vals)
                .map(|(y, l)| {
                    let ay = op.apply(y);
                    let r: f64 = ay.iter().zip(y).map(|(a, b)| (a - l * b).powi(2)).sum();
                    let yn: f64 = y.iter().map(|x| x * x).sum();
                    (r / yn).sqrt() / l.abs()
                })
                .collect();
            if last_residuals.iter().all(|r| *r <= opts.tol * 0.1) || m == n {
                return Ok((vals, vecs));
            }
        }
        if basis.len() >= n {
            break;
        }
        let start = basis.len().saturating_sub(bs);
        block = basis[start..]
            .iter()
            .map(|v| {
                let mut w = v.clone();
                lu.solve_in_place(&mut w);
                w
            })
            .collect();
    }
    let worst = last_residuals.iter().cloned().fold(0.0, f64::max);
    Err(Error::EigenNonConvergence {
        worst_residual: worst,
        residuals: last_residuals,
    })
}

/// Fractional norm together with a flag telling whether `w` had a
/// component outside the span of the basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalNorm {
    pub value: f64,
    pub truncated: bool,
}

impl SpectralBasis {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of retained modes.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }

    pub fn mode(&self, j: usize) -> &[f64] {
        &self.eigenvectors[j]
    }

    /// Keeps the first `k` modes.
    pub fn truncated(&self, k: usize) -> Result<SpectralBasis> {
        if k == 0 || k > self.len() {
            return invalid(format!("cannot keep {k} of {} modes", self.len()));
        }
        Ok(SpectralBasis {
            grid: self.grid.clone(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenvectors: self.eigenvectors[..k].to_vec(),
        })
    }

    /// `⟨w, e_j⟩` for the first `k` modes.
    pub fn coefficients(&self, w: &[f64], k: usize) -> Vec<f64> {
        self.eigenvectors[..k]
            .iter()
            .map(|e| self.grid.dot(w, e))
            .collect()
    }

    pub fn coefficients_complex(&self, w: &[Complex64], k: usize) -> Vec<Complex64> {
        let vol = self.grid.cell_volume();
        self.eigenvectors[..k]
            .iter()
            .map(|e| w.iter().zip(e).map(|(a, b)| a * b).sum::<Complex64>() * vol)
            .collect()
    }

    /// `Σ_j c_j e_j`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (c, e) in coeffs.iter().zip(&self.eigenvectors) {
            out.iter_mut().zip(e).for_each(|(o, x)| *o += c * x);
        }
        out
    }

    pub fn synthesize_complex(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (c, e) in coeffs.iter().zip(&self.eigenvectors) {
            out.iter_mut().zip(e).for_each(|(o, x)| *o += c * x);
        }
        out
    }

    /// Relative residuals `|A e_j - λ_j e_j| / λ_j`.
    pub fn residuals(&self, op: &EllipticOperator) -> Vec<f64> {
        self.eigenvectors
            .iter()
            .zip(&self.eigenvalues)
            .map(|(e, l)| {
                let ae = op.apply(e);
                let r: Vec<f64> = ae.iter().zip(e).map(|(a, b)| a - l * b).collect();
                self.grid.norm(&r) / l.abs()
            })
            .collect()
    }

    /// `(Σ_j λ_j^k ⟨w, e_j⟩²)^{1/2}` over the retained modes.
    pub fn fractional_norm(&self, w: &[f64], k: i32) -> FractionalNorm {
        let coeffs = self.coefficients(w, self.len());
        let captured: f64 = coeffs.iter().map(|c| c * c).sum();
        let total = self.grid.dot(w, w);
        let value = coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| l.powi(k) * c * c)
            .sum::<f64>()
            .sqrt();
        FractionalNorm {
            value,
            truncated: total - captured > 1e-10 * total.max(f64::MIN_POSITIVE),
        }
    }
}

pub fn fractional_norm(basis: &SpectralBasis, w: &[f64], k: i32) -> FractionalNorm {
    basis.fractional_norm(w, k)
}
