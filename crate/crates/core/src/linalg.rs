//! Small numerical kernels: a scalar trait covering real and complex fields,
//! banded LU without pivoting, and matrix-free Krylov solvers.

use std::fmt::Debug;
use std::ops::Mul;

use num_complex::Complex64;
use num_traits::NumAssign;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Field of nodal values: `f64` or `Complex64`.
pub trait Scalar: NumAssign + Copy + Debug + Send + Sync + Mul<f64, Output = Self> + 'static {
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    fn from_real(x: f64) -> Self;
    fn re(self) -> f64;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn re(self) -> f64 {
        self
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
}

/// LU factors of a banded matrix, computed without pivoting.
///
/// Suitable for diagonally dominant matrices such as `I + a A` with
/// `Re(a) >= 0` and `A` the Dirichlet Laplacian.
#[derive(Debug, Clone)]
pub struct BandedLu<T: Scalar> {
    n: usize,
    bw: usize,
    band: Vec<T>,
}

impl<T: Scalar> BandedLu<T> {
    /// `entry(i, j)` is queried only for `|i - j| <= bw`.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> T) -> Result<Self> {
        let width = 2 * bw + 1;
        let mut band = vec![T::zero(); n * width];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(n - 1);
            for j in lo..=hi {
                band[i * width + j + bw - i] = entry(i, j);
            }
        }
        let idx = |i: usize, j: usize| i * width + j + bw - i;
        let scale = band.iter().map(|v| v.modulus()).fold(0.0, f64::max);
        for k in 0..n {
            let pivot = band[idx(k, k)];
            if !(pivot.modulus() > 1e-14 * scale) {
                return Err(Error::LinearSolve(format!(
                    "zero pivot at row {k} (|pivot| = {:e})",
                    pivot.modulus()
                )));
            }
            let hi = (k + bw).min(n - 1);
            for i in k + 1..=hi {
                let l = band[idx(i, k)] / pivot;
                band[idx(i, k)] = l;
                for j in k + 1..=hi {
                    let u = band[idx(k, j)];
                    band[idx(i, j)] -= l * u;
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    // Band offsets read more clearly with explicit indices.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, x: &mut [T]) {
        let (n, bw) = (self.n, self.bw);
        let width = 2 * bw + 1;
        let idx = |i: usize, j: usize| i * width + j + bw - i;
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[idx(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + bw).min(n - 1) {
                s -= self.band[idx(i, j)] * x[j];
            }
            x[i] = s / self.band[idx(i, i)];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KrylovMethod {
    ConjugateGradient,
    /// Conjugate residuals: same recurrence as CG in the operator inner
    /// product, with monotonically non-increasing residual norms.
    #[default]
    ConjugateResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovOptions {
    pub method: KrylovMethod,
    /// Relative residual target `|r| <= tol |b|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Plateau detection: stagnation is declared when the best residual has
    /// not dropped by a factor `1 - stagnation_drop` over this many steps.
    pub stagnation_window: usize,
    pub stagnation_drop: f64,
}

impl KrylovOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            method: KrylovMethod::default(),
            tol,
            max_iter,
            stagnation_window: 20,
            stagnation_drop: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrylovStatus {
    Converged,
    ZeroRhs,
    MaxIter,
    /// The residual stopped decreasing: either the plateau rule fired or
    /// the remaining residual lies in the numerical null space of a
    /// singular operator, so no Krylov step can reduce it.
    Stagnated,
}

impl KrylovStatus {
    pub fn is_success(self) -> bool {
        matches!(self, KrylovStatus::Converged | KrylovStatus::ZeroRhs)
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub status: KrylovStatus,
    pub iterations: usize,
    /// Relative residuals, starting with 1 at iteration 0.
    pub residual_history: Vec<f64>,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn stagnated(history: &[f64], opts: &KrylovOptions) -> bool {
    let w = opts.stagnation_window;
    if w == 0 || history.len() <= w {
        return false;
    }
    let k = history.len() - 1;
    let best_now = history.iter().cloned().fold(f64::INFINITY, f64::min);
    let best_then = history[..=k - w].iter().cloned().fold(f64::INFINITY, f64::min);
    best_now > (1.0 - opts.stagnation_drop) * best_then
}

/// Solves `A x = b` for a symmetric positive (semi)definite operator given
/// as a closure, starting from `x = 0`.
pub fn krylov_solve<F>(mut apply: F, b: &[f64], opts: &KrylovOptions) -> Result<KrylovOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![0.0; n],
            status: KrylovStatus::ZeroRhs,
            iterations: 0,
            residual_history: vec![0.0],
        });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut history = vec![1.0];
    let mut op_scale = 0.0f64;
    let breakdown_tol = 1e-14;

    match opts.method {
        KrylovMethod::ConjugateGradient => {
            let mut rr = dot(&r, &r);
            for it in 1..=opts.max_iter {
                let ap = apply(&p)?;
                let pp = dot(&p, &p);
                op_scale = op_scale.max(norm(&ap) / pp.sqrt());
                let pap = dot(&p, &ap);
                if !(pap > breakdown_tol * op_scale * pp) {
                    return Ok(done(x, KrylovStatus::Stagnated, it - 1, history));
                }
                let alpha = rr / pap;
                axpy(alpha, &p, &mut x);
                axpy(-alpha, &ap, &mut r);
                let rr_new = dot(&r, &r);
                history.push(rr_new.sqrt() / b_norm);
                if rr_new.sqrt() <= opts.tol * b_norm {
                    return Ok(done(x, KrylovStatus::Converged, it, history));
                }
                if stagnated(&history, opts) {
                    return Ok(done(x, KrylovStatus::Stagnated, it, history));
                }
                let beta = rr_new / rr;
                for (pi, ri) in p.iter_mut().zip(&r) {
                    *pi = ri + beta * *pi;
                }
                rr = rr_new;
            }
        }
        KrylovMethod::ConjugateResidual => {
            let mut ar = apply(&r)?;
            let mut ap = ar.clone();
            let mut rar = dot(&r, &ar);
            for it in 1..=opts.max_iter {
                let rr = dot(&r, &r);
                op_scale = op_scale.max(norm(&ar) / rr.sqrt());
                if !(rar > breakdown_tol * op_scale * rr) {
                    return Ok(done(x, KrylovStatus::Stagnated, it - 1, history));
                }
                let apap = dot(&ap, &ap);
                let alpha = rar / apap;
                axpy(alpha, &p, &mut x);
                axpy(-alpha, &ap, &mut r);
                let r_norm = norm(&r);
                history.push(r_norm / b_norm);
                if r_norm <= opts.tol * b_norm {
                    return Ok(done(x, KrylovStatus::Converged, it, history));
                }
                if stagnated(&history, opts) {
                    return Ok(done(x, KrylovStatus::Stagnated, it, history));
                }
                ar = apply(&r)?;
                let rar_new = dot(&r, &ar);
                let beta = rar_new / rar;
                for (pi, ri) in p.iter_mut().zip(&r) {
                    *pi = ri + beta * *pi;
                }
                for (api, ari) in ap.iter_mut().zip(&ar) {
                    *api = ari + beta * *api;
                }
                rar = rar_new;
            }
        }
    }
    let iterations = history.len() - 1;
    Ok(done(x, KrylovStatus::MaxIter, iterations, history))
}

fn done(x: Vec<f64>, status: KrylovStatus, iterations: usize, history: Vec<f64>) -> KrylovOutcome {
    KrylovOutcome {
        x,
        status,
        iterations,
        residual_history: history,
    }
}
