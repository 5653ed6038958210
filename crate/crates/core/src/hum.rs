//! Control synthesis by the Hilbert Uniqueness Method on a spectrally
//! filtered seed space.
//!
//! Seeds are adjoint terminal data restricted to the first `K` modes of
//! every component. The Gramian `G = R L O` chains the adjoint observation
//! `O`, the forward control-to-state map `L` from rest and the pairing `R`
//! that represents a terminal state in seed coordinates. The discrete
//! schemes make `⟨R L v, z⟩ = ∫⟨v, O z⟩ dt` exact, so `G` is symmetric
//! positive semidefinite to round-off.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    energy, solve, solve_adjoint, CascadeSystem, ControlSignal, DiffusionState, Family,
    SolveOptions, SystemState, TimeGrid, WaveState,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, krylov_solve, KrylovMethod, KrylovOptions, KrylovStatus};
use crate::operators::SpectralBasis;

/// Default cap on the seed dimension for dense Gramian assembly.
pub const DENSE_SEED_LIMIT: usize = 400;

/// Transposed cascade: coupling `(i, j)` becomes `(j, i)` and controls turn
/// into observations.
pub fn adjoint_system(sys: &CascadeSystem) -> Result<CascadeSystem> {
    if sys.is_transposed() {
        return invalid("the system is already transposed");
    }
    sys.mirrored()
}

/// Filtered coordinates of adjoint terminal data.
///
/// Every (component, mode) pair carries two real slots. Hyperbolic:
/// `(s, p)` with `φ(T) = Σ p_j e_j` and `φ'(T) = -Σ √λ_j s_j e_j`; the
/// Euclidean norm of `(s, p)` is twice the energy `e_1` of the free
/// trajectory with data `(φ(T), φ'(T))` read as `(ζ'(T), -Aζ(T))`.
/// Dissipative: real and imaginary part of the coefficient of `φ(T)`, with
/// the L2 product.
#[derive(Debug, Clone)]
pub struct SeedSpace {
    family: Family,
    n_components: usize,
    basis: SpectralBasis,
}

impl SeedSpace {
    pub fn new(sys: &CascadeSystem, k_filter: usize) -> Result<Self> {
        if k_filter == 0 {
            return invalid("K_filter must be at least 1");
        }
        if k_filter > sys.basis().len() {
            return invalid(format!(
                "K_filter = {k_filter} exceeds the {} computed modes",
                sys.basis().len()
            ));
        }
        Ok(Self {
            family: sys.family(),
            n_components: sys.n_components(),
            basis: sys.basis().truncated(k_filter)?,
        })
    }

    pub fn k_filter(&self) -> usize {
        self.basis.len()
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// Number of seed coordinates: real pairs for the hyperbolic family,
    /// complex coefficients for the dissipative family.
    pub fn dim(&self) -> usize {
        let per = if self.family.is_hyperbolic() { 2 } else { 1 };
        self.n_components * self.k_filter() * per
    }

    /// Length of the real coordinate vector.
    pub fn real_len(&self) -> usize {
        2 * self.n_components * self.k_filter()
    }

    fn idx(&self, component: usize, mode: usize, slot: usize) -> usize {
        (component * self.k_filter() + mode) * 2 + slot
    }

    /// Adjoint terminal data represented by `z`.
    pub fn terminal_seed(&self, z: &[f64]) -> Result<SystemState> {
        self.check(z)?;
        let k = self.k_filter();
        let t = 0.0;
        Ok(match self.family {
            Family::Hyperbolic => {
                let mut position = Vec::with_capacity(self.n_components);
                let mut velocity = Vec::with_capacity(self.n_components);
                for i in 0..self.n_components {
                    let p: Vec<f64> = (0..k).map(|j| z[self.idx(i, j, 1)]).collect();
                    let q: Vec<f64> = (0..k)
                        .map(|j| -self.basis.eigenvalue(j).sqrt() * z[self.idx(i, j, 0)])
                        .collect();
                    position.push(self.basis.synthesize(&p));
                    velocity.push(self.basis.synthesize(&q));
                }
                SystemState::Wave(WaveState {
                    t,
                    position,
                    velocity,
                })
            }
            Family::Dissipative { .. } => SystemState::Diffusion(DiffusionState {
                t,
                values: (0..self.n_components)
                    .map(|i| {
                        let c: Vec<Complex64> = (0..k)
                            .map(|j| Complex64::new(z[self.idx(i, j, 0)], z[self.idx(i, j, 1)]))
                            .collect();
                        self.basis.synthesize_complex(&c)
                    })
                    .collect(),
            }),
        })
    }

    /// Pairing map `R`: `R(Y) · z` equals the duality pairing of the forward
    /// state `Y` with the adjoint data of `z`.
    pub fn pairing(&self, state: &SystemState) -> Vec<f64> {
        let k = self.k_filter();
        let mut out = vec![0.0; self.real_len()];
        match state {
            SystemState::Wave(s) => {
                for i in 0..self.n_components {
                    let q = self.basis.coefficients(&s.position[i], k);
                    let p = self.basis.coefficients(&s.velocity[i], k);
                    for j in 0..k {
                        out[self.idx(i, j, 0)] = self.basis.eigenvalue(j).sqrt() * q[j];
                        out[self.idx(i, j, 1)] = p[j];
                    }
                }
            }
            SystemState::Diffusion(s) => {
                for i in 0..self.n_components {
                    let c = self.basis.coefficients_complex(&s.values[i], k);
                    for j in 0..k {
                        out[self.idx(i, j, 0)] = c[j].re;
                        out[self.idx(i, j, 1)] = c[j].im;
                    }
                }
            }
        }
        out
    }

    /// Energy of the filtered part of `state`: `½|R(Y)|²`.
    pub fn filtered_energy(&self, state: &SystemState) -> f64 {
        let r = self.pairing(state);
        0.5 * dot(&r, &r)
    }

    /// Orthogonal projection of a forward state onto the retained modes.
    pub fn project(&self, state: &SystemState) -> SystemState {
        let k = self.k_filter();
        match state {
            SystemState::Wave(s) => SystemState::Wave(WaveState {
                t: s.t,
                position: s
                    .position
                    .iter()
                    .map(|w| self.basis.synthesize(&self.basis.coefficients(w, k)))
                    .collect(),
                velocity: s
                    .velocity
                    .iter()
                    .map(|w| self.basis.synthesize(&self.basis.coefficients(w, k)))
                    .collect(),
            }),
            SystemState::Diffusion(s) => SystemState::Diffusion(DiffusionState {
                t: s.t,
                values: s
                    .values
                    .iter()
                    .map(|w| {
                        self.basis
                            .synthesize_complex(&self.basis.coefficients_complex(w, k))
                    })
                    .collect(),
            }),
        }
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.real_len() {
            return invalid(format!(
                "seed has {} coordinates, expected {}",
                z.len(),
                self.real_len()
            ));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return invalid("seed contains non-finite values");
        }
        Ok(())
    }
}

/// Matrix-free filtered Gramian `G + ε I`.
#[derive(Debug)]
pub struct GramianOperator {
    forward: CascadeSystem,
    adjoint: CascadeSystem,
    time: TimeGrid,
    seed: SeedSpace,
    epsilon: f64,
    applies: AtomicUsize,
}

impl GramianOperator {
    pub fn new(sys: &CascadeSystem, time: TimeGrid, k_filter: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return invalid("ε must be finite and >= 0");
        }
        Ok(Self {
            forward: sys.clone(),
            adjoint: adjoint_system(sys)?,
            time,
            seed: SeedSpace::new(sys, k_filter)?,
            epsilon,
            applies: AtomicUsize::new(0),
        })
    }

    pub fn seed_space(&self) -> &SeedSpace {
        &self.seed
    }

    pub fn forward_system(&self) -> &CascadeSystem {
        &self.forward
    }

    pub fn adjoint_system(&self) -> &CascadeSystem {
        &self.adjoint
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn apply_count(&self) -> usize {
        self.applies.load(Ordering::Relaxed)
    }

    /// Adjoint observations `O z` along the trajectory seeded by `z`.
    pub fn observe(&self, z: &[f64]) -> Result<ControlSignal> {
        let seed = self.seed.terminal_seed(z)?;
        Ok(solve_adjoint(&self.adjoint, &seed, &self.time, &SolveOptions::default())?.observations)
    }

    /// `R L v`: seed representation of the state reached from rest.
    pub fn control_to_seed(&self, v: &ControlSignal) -> Result<Vec<f64>> {
        let zero = SystemState::zeros(&self.forward);
        let sol = solve(&self.forward, &zero, Some(v), &self.time, &SolveOptions::default())?;
        Ok(self.seed.pairing(&sol.terminal))
    }

    /// `(G + ε I) z`.
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.applies.fetch_add(1, Ordering::Relaxed);
        if z.iter().all(|x| *x == 0.0) {
            self.seed.check(z)?;
            return Ok(vec![0.0; z.len()]);
        }
        let v = self.observe(z)?;
        let mut out = self.control_to_seed(&v)?;
        if self.epsilon > 0.0 {
            for (o, x) in out.iter_mut().zip(z) {
                *o += self.epsilon * x;
            }
        }
        Ok(out)
    }

    /// Dense matrix by column probes, assembled in parallel in column order.
    pub fn assemble_dense(&self, limit: usize) -> Result<DMatrix<f64>> {
        let n = self.seed.real_len();
        if n > limit {
            return Err(Error::LimitExceeded {
                requested: n,
                limit,
            });
        }
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                self.apply(&e)
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumOptions {
    pub k_filter: usize,
    pub epsilon: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
    pub method: KrylovMethod,
}

impl HumOptions {
    pub fn new(k_filter: usize, epsilon: f64, cg_tol: f64, max_iter: usize) -> Self {
        Self {
            k_filter,
            epsilon,
            cg_tol,
            max_iter,
            method: KrylovMethod::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HumResult {
    pub control: ControlSignal,
    pub status: KrylovStatus,
    /// Converged and the filtered terminal energy does not exceed the
    /// initial energy.
    pub success: bool,
    pub cg_iterations: usize,
    pub residual_history: Vec<f64>,
    pub initial_energy: f64,
    pub terminal_energy_filtered: f64,
    pub terminal_energy_full: f64,
    pub terminal_energy_per_component: Vec<f64>,
    /// L2 norm of the whole terminal state (`√(2 e)`).
    pub terminal_norm: f64,
    pub free_terminal_energy_per_component: Vec<f64>,
    pub free_terminal_norm: f64,
    /// Energy of the part of the initial data outside the filter space
    /// (dropped before synthesis).
    pub projection_residual: f64,
    /// `|v|²` and `⟨G X, X⟩` (ε excluded); equal for a HUM control.
    pub control_norm_sq: f64,
    pub gramian_quadratic: f64,
    pub gramian_applies: usize,
    pub epsilon: f64,
    pub horizon: f64,
    pub dt: f64,
    pub k_filter: usize,
    pub wall_time_s: f64,
    pub initial_state: SystemState,
    pub terminal_state: SystemState,
}

impl HumResult {
    pub fn filtered_ratio(&self) -> f64 {
        if self.initial_energy > 0.0 {
            self.terminal_energy_filtered / self.initial_energy
        } else {
            0.0
        }
    }
}

/// Drives `y0` (projected onto the filter space) to zero on the filter
/// space at time `T`, or to `ε`-penalized smallness for `ε > 0`.
pub fn synthesize_control(
    sys: &CascadeSystem,
    y0: &SystemState,
    time: &TimeGrid,
    opts: &HumOptions,
) -> Result<HumResult> {
    let start = Instant::now();
    if !sys.family().is_hyperbolic() && !(opts.epsilon > 0.0) {
        return invalid("the dissipative family needs a penalization ε > 0");
    }
    if !(opts.cg_tol > 0.0) || opts.max_iter == 0 {
        return invalid("cg_tol must be positive and max_iter at least 1");
    }
    y0.check(sys)?;
    let gram = GramianOperator::new(sys, *time, opts.k_filter, opts.epsilon)?;
    let seed = gram.seed_space();

    let y0p = seed.project(y0);
    let residual_state = difference(y0, &y0p);
    let projection_residual = energy(sys, &residual_state)?.total;
    let initial_energy = energy(sys, &y0p)?.total;

    let free = solve(sys, &y0p, None, time, &SolveOptions::default())?.terminal;
    let r_free = seed.pairing(&free);
    let b: Vec<f64> = r_free.iter().map(|x| -x).collect();

    let kopts = KrylovOptions {
        method: opts.method,
        ..KrylovOptions::new(opts.cg_tol, opts.max_iter)
    };
    let outcome = krylov_solve(|z| gram.apply(z), &b, &kopts)?;
    let control = gram.observe(&outcome.x)?;
    let controlled = solve(sys, &y0p, Some(&control), time, &SolveOptions::default())?.terminal;
    let r_ctrl = seed.pairing(&controlled);
    let gx: Vec<f64> = r_ctrl.iter().zip(&r_free).map(|(a, b)| a - b).collect();

    let terminal = energy(sys, &controlled)?;
    let free_e = energy(sys, &free)?;
    let terminal_energy_filtered = 0.5 * dot(&r_ctrl, &r_ctrl);
    let status = outcome.status;
    Ok(HumResult {
        success: status.is_success() && terminal_energy_filtered <= initial_energy,
        status,
        cg_iterations: outcome.iterations,
        residual_history: outcome.residual_history,
        initial_energy,
        terminal_energy_filtered,
        terminal_energy_full: terminal.total,
        terminal_norm: state_norm(sys, &controlled)?,
        terminal_energy_per_component: terminal.per_component,
        free_terminal_energy_per_component: free_e.per_component,
        free_terminal_norm: state_norm(sys, &free)?,
        projection_residual,
        control_norm_sq: control.norm_sq(),
        gramian_quadratic: dot(&gx, &outcome.x),
        gramian_applies: gram.apply_count(),
        epsilon: opts.epsilon,
        horizon: time.horizon(),
        dt: time.dt,
        k_filter: opts.k_filter,
        wall_time_s: start.elapsed().as_secs_f64(),
        control,
        initial_state: y0p,
        terminal_state: controlled,
    })
}

/// `√(2 e)`: the L2 norm for the dissipative family, the energy norm for
/// the hyperbolic one.
fn state_norm(sys: &CascadeSystem, state: &SystemState) -> Result<f64> {
    Ok((2.0 * energy(sys, state)?.total).sqrt())
}

fn difference(a: &SystemState, b: &SystemState) -> SystemState {
    let sub = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
        x.iter()
            .zip(y)
            .map(|(u, w)| u.iter().zip(w).map(|(p, q)| p - q).collect())
            .collect()
    };
    match (a, b) {
        (SystemState::Wave(x), SystemState::Wave(y)) => SystemState::Wave(WaveState {
            t: x.t,
            position: sub(&x.position, &y.position),
            velocity: sub(&x.velocity, &y.velocity),
        }),
        (SystemState::Diffusion(x), SystemState::Diffusion(y)) => {
            SystemState::Diffusion(DiffusionState {
                t: x.t,
                values: x
                    .values
                    .iter()
                    .zip(&y.values)
                    .map(|(u, w)| u.iter().zip(w).map(|(p, q)| p - q).collect())
                    .collect(),
            })
        }
        _ => unreachable!("states of one system share a family"),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub epsilons: Vec<f64>,
    pub terminal_norms: Vec<f64>,
    /// Least-squares slope of `log |Y(T)|` against `log ε`.
    pub slope: f64,
    pub intercept: f64,
    /// Some run did not converge.
    pub partial: bool,
    pub results: Vec<HumResult>,
}

pub fn epsilon_sweep(
    sys: &CascadeSystem,
    y0: &SystemState,
    time: &TimeGrid,
    opts: &HumOptions,
    epsilons: &[f64],
) -> Result<SweepResult> {
    if epsilons.len() < 3 {
        return invalid("an ε sweep needs at least 3 values");
    }
    if epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite()))
        || epsilons.windows(2).any(|w| w[1] >= w[0])
    {
        return invalid("ε values must be positive and strictly decreasing");
    }
    let mut results = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let o = HumOptions { epsilon: eps, ..*opts };
        results.push(synthesize_control(sys, y0, time, &o)?);
    }
    let terminal_norms: Vec<f64> = results.iter().map(|r| r.terminal_norm).collect();
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = terminal_norms
        .iter()
        .map(|n| n.max(f64::MIN_POSITIVE).ln())
        .collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(SweepResult {
        epsilons: epsilons.to_vec(),
        partial: results.iter().any(|r| !r.status.is_success()),
        terminal_norms,
        slope,
        intercept,
        results,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
