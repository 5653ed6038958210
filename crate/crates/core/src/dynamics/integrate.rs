use num_complex::Complex64;

use super::system::{
    add_control_forcing, CascadeSystem, ControlSignal, DiffusionState, Family, SystemState,
    TimeGrid, WaveState,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::BandedLu;

type Field<T> = Vec<Vec<T>>;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveOptions {
    /// Keep every `k`-th time level (and always the last one).
    pub snapshot_every: Option<usize>,
}

impl SolveOptions {
    pub fn snapshots(every: usize) -> Self {
        Self {
            snapshot_every: Some(every.max(1)),
        }
    }

    fn wants(&self, m: usize, steps: usize) -> bool {
        self.snapshot_every.is_some_and(|k| m.is_multiple_of(k) || m == steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub terminal: SystemState,
    pub snapshots: Vec<SystemState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    /// `B_k^* φ_k` at every time level, laid out like a control signal.
    pub observations: ControlSignal,
    /// Adjoint state at `t = 0`.
    pub initial: SystemState,
    pub snapshots: Vec<SystemState>,
}

/// Largest leapfrog step allowed for this operator.
pub fn max_stable_dt(sys: &CascadeSystem) -> f64 {
    0.9 * 2.0 / sys.op().lambda_max().sqrt()
}

fn check_inputs(
    sys: &CascadeSystem,
    initial: &SystemState,
    control: Option<&ControlSignal>,
    time: &TimeGrid,
) -> Result<()> {
    initial.check(sys)?;
    if let Some(c) = control {
        c.check(sys, time)?;
    }
    if sys.family().is_hyperbolic() {
        let max_dt = max_stable_dt(sys);
        if time.dt > max_dt {
            return Err(Error::Cfl {
                dt: time.dt,
                max_dt,
            });
        }
    }
    Ok(())
}

/// Dispatches on the family of `sys`.
pub fn solve(
    sys: &CascadeSystem,
    initial: &SystemState,
    control: Option<&ControlSignal>,
    time: &TimeGrid,
    opts: &SolveOptions,
) -> Result<Solution> {
    match sys.family() {
        Family::Hyperbolic => solve_hyperbolic(sys, initial, control, time, opts),
        Family::Dissipative { .. } => solve_dissipative(sys, initial, control, time, opts),
    }
}

/// Explicit leapfrog with coupling and control at the central level.
pub fn solve_hyperbolic(
    sys: &CascadeSystem,
    initial: &SystemState,
    control: Option<&ControlSignal>,
    time: &TimeGrid,
    opts: &SolveOptions,
) -> Result<Solution> {
    if !sys.family().is_hyperbolic() {
        return invalid("solve_hyperbolic needs a hyperbolic system");
    }
    check_inputs(sys, initial, control, time)?;
    let SystemState::Wave(init) = initial else {
        unreachable!("checked above")
    };
    let mut snapshots = Vec::new();
    let (pos, vel) = leapfrog(
        sys,
        &init.position,
        &init.velocity,
        control,
        time,
        |_, _| {},
        |m, y, v| {
            if opts.wants(m, time.steps) {
                snapshots.push(wave_state(time.time(m), y, v));
            }
        },
        opts.snapshot_every.is_some(),
    );
    Ok(Solution {
        terminal: wave_state(time.horizon(), &pos, &vel),
        snapshots,
    })
}

/// Crank–Nicolson on `y' = e^{-iθ}(-A y - C y + B v)`.
pub fn solve_dissipative(
    sys: &CascadeSystem,
    initial: &SystemState,
    control: Option<&ControlSignal>,
    time: &TimeGrid,
    opts: &SolveOptions,
) -> Result<Solution> {
    if sys.family().is_hyperbolic() {
        return invalid("solve_dissipative needs a dissipative system");
    }
    check_inputs(sys, initial, control, time)?;
    let SystemState::Diffusion(init) = initial else {
        unreachable!("checked above")
    };
    let mut snapshots = Vec::new();
    let y = crank_nicolson(
        sys,
        sys.family().rotation(),
        &init.values,
        control,
        time,
        |m, y| {
            if opts.wants(m, time.steps) {
                snapshots.push(diffusion_state(time.time(m), y));
            }
        },
    )?;
    Ok(Solution {
        terminal: diffusion_state(time.horizon(), &y),
        snapshots,
    })
}

/// Integrates the transposed homogeneous system backward from `seed`,
/// given at `t = T`, and records `B_k^* φ_k` at every level.
///
/// Hyperbolic seeds are `(φ(T), φ'(T))`. The recorded series is the exact
/// discrete transpose of the forward control map:
/// `⟨y'(T), φ(T)⟩ - ⟨y(T), φ'(T)⟩ = Σ_m w_m ⟨v^m, obs^m⟩` for the forward
/// solution from rest. Dissipative seeds are `φ(T)` and the identity reads
/// `⟨y(T), φ(T)⟩ = Σ_m w_m ⟨v^m, obs^m⟩` (sesquilinear).
pub fn solve_adjoint(
    sys: &CascadeSystem,
    seed: &SystemState,
    time: &TimeGrid,
    opts: &SolveOptions,
) -> Result<AdjointSolution> {
    if !sys.is_transposed() {
        return invalid("solve_adjoint needs a transposed system (see hum::adjoint_system)");
    }
    check_inputs(sys, seed, None, time)?;
    let steps = time.steps;
    let mut observations = ControlSignal::zeros(sys, *time);
    let mut snapshots = Vec::new();
    match seed {
        SystemState::Wave(s) => {
            let neg_vel: Field<f64> = s
                .velocity
                .iter()
                .map(|v| v.iter().map(|x| -x).collect())
                .collect();
            let (pos, vel) = leapfrog(
                sys,
                &s.position,
                &neg_vel,
                None,
                time,
                |m, y| record_observation(sys, &mut observations, steps - m, y, |x| x.into()),
                |m, y, v| {
                    if opts.wants(m, steps) {
                        let v: Field<f64> =
                            v.iter().map(|f| f.iter().map(|x| -x).collect()).collect();
                        snapshots.push(wave_state(time.time(steps - m), y, &v));
                    }
                },
                opts.snapshot_every.is_some(),
            );
            let vel: Field<f64> = vel.iter().map(|f| f.iter().map(|x| -x).collect()).collect();
            snapshots.reverse();
            Ok(AdjointSolution {
                observations,
                initial: wave_state(0.0, &pos, &vel),
                snapshots,
            })
        }
        SystemState::Diffusion(s) => {
            // Raw traces B^* χ^k, combined below into the averaged samples
            // that make the pairing with the forward scheme exact.
            let mut raw = ControlSignal::zeros(sys, *time);
            let gamma = sys.family().rotation();
            let chi = crank_nicolson(sys, gamma.conj(), &s.values, None, time, |m, y| {
                record_observation(sys, &mut raw, steps - m, y, |x| x);
                if opts.wants(m, steps) {
                    snapshots.push(diffusion_state(time.time(steps - m), y));
                }
            })?;
            let g = gamma.conj();
            for (out, ch) in observations.channels.iter_mut().zip(&raw.channels) {
                for m in 0..=steps {
                    let dst = out.sample_mut(m);
                    let here = ch.sample(m);
                    if m == 0 || m == steps {
                        let other = ch.sample(if m == 0 { 1 } else { steps - 1 });
                        for ((d, a), b) in dst.iter_mut().zip(here).zip(other) {
                            *d = g * (a + b) * 0.5;
                        }
                    } else {
                        let (lo, hi) = (ch.sample(m - 1), ch.sample(m + 1));
                        for (((d, a), l), h) in dst.iter_mut().zip(here).zip(lo).zip(hi) {
                            *d = g * (a * 2.0 + l + h) * 0.25;
                        }
                    }
                }
            }
            snapshots.reverse();
            Ok(AdjointSolution {
                observations,
                initial: diffusion_state(0.0, &chi),
                snapshots,
            })
        }
    }
}

/// Seed whose adjoint trajectory is the time derivative of the one started
/// from `seed`: `(φ'(T), -M^T φ(T))`. Recording `B^*` along it yields the
/// velocity observation `b φ'` of the original seed.
pub fn derivative_seed(sys: &CascadeSystem, seed: &WaveState) -> Result<WaveState> {
    SystemState::Wave(seed.clone()).check(sys)?;
    let mut m = vec![vec![0.0; sys.grid().len()]; sys.n_components()];
    sys.apply_m(&seed.position, &mut m);
    Ok(WaveState {
        t: seed.t,
        position: seed.velocity.clone(),
        velocity: m.iter().map(|f| f.iter().map(|x| -x).collect()).collect(),
    })
}

fn record_observation<T: crate::linalg::Scalar>(
    sys: &CascadeSystem,
    signal: &mut ControlSignal,
    m: usize,
    y: &[Vec<T>],
    lift: impl Fn(T) -> Complex64,
) {
    for ch in &mut signal.channels {
        let action = sys.actions()[ch.component]
            .as_ref()
            .expect("channels follow the controlled components");
        let obs = action.adjoint(&y[ch.component]);
        for (d, s) in ch.sample_mut(m).iter_mut().zip(obs) {
            *d = lift(s);
        }
    }
}

fn wave_state(t: f64, y: &[Vec<f64>], v: &[Vec<f64>]) -> SystemState {
    SystemState::Wave(WaveState {
        t,
        position: y.to_vec(),
        velocity: v.to_vec(),
    })
}

fn diffusion_state(t: f64, y: &[Vec<Complex64>]) -> SystemState {
    SystemState::Diffusion(DiffusionState {
        t,
        values: y.to_vec(),
    })
}

fn forcing_real(
    sys: &CascadeSystem,
    control: Option<&ControlSignal>,
    m: usize,
    out: &mut [Vec<f64>],
) {
    out.iter_mut().for_each(|f| f.fill(0.0));
    add_control_forcing(sys, control, m, |z| z.re, out);
}

/// Leapfrog core. `on_level(m, y^m)` runs at every level; `on_snapshot`
/// receives `(m, y^m, velocity)` when velocities are requested, with the
/// centred difference at interior levels.
#[allow(clippy::too_many_arguments)]
fn leapfrog(
    sys: &CascadeSystem,
    y0: &[Vec<f64>],
    v0: &[Vec<f64>],
    control: Option<&ControlSignal>,
    time: &TimeGrid,
    mut on_level: impl FnMut(usize, &[Vec<f64>]),
    mut on_snapshot: impl FnMut(usize, &[Vec<f64>], &[Vec<f64>]),
    velocities: bool,
) -> (Field<f64>, Field<f64>) {
    let (nc, nodes) = (sys.n_components(), sys.grid().len());
    let (dt, steps) = (time.dt, time.steps);
    let dt2 = dt * dt;
    let zeros = || vec![vec![0.0; nodes]; nc];
    let mut my = zeros();
    let mut f = zeros();

    let mut prev = y0.to_vec();
    sys.apply_m(&prev, &mut my);
    forcing_real(sys, control, 0, &mut f);
    let mut cur = zeros();
    for i in 0..nc {
        for k in 0..nodes {
            cur[i][k] = y0[i][k] + dt * v0[i][k] + 0.5 * dt2 * (f[i][k] - my[i][k]);
        }
    }
    on_level(0, &prev);
    if velocities {
        on_snapshot(0, y0, v0);
    }

    let mut next = zeros();
    for m in 1..steps {
        sys.apply_m(&cur, &mut my);
        forcing_real(sys, control, m, &mut f);
        for i in 0..nc {
            for k in 0..nodes {
                next[i][k] = 2.0 * cur[i][k] - prev[i][k] - dt2 * (my[i][k] - f[i][k]);
            }
        }
        on_level(m, &cur);
        if velocities {
            let v: Field<f64> = (0..nc)
                .map(|i| {
                    (0..nodes)
                        .map(|k| (next[i][k] - prev[i][k]) / (2.0 * dt))
                        .collect()
                })
                .collect();
            on_snapshot(m, &cur, &v);
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }

    sys.apply_m(&cur, &mut my);
    forcing_real(sys, control, steps, &mut f);
    let mut vt = zeros();
    for i in 0..nc {
        for k in 0..nodes {
            vt[i][k] = (cur[i][k] - prev[i][k]) / dt - 0.5 * dt * (my[i][k] - f[i][k]);
        }
    }
    on_level(steps, &cur);
    if velocities {
        on_snapshot(steps, &cur, &vt);
    }
    (cur, vt)
}

/// Crank–Nicolson core for `y' = γ(-M y + F)`. The implicit part is block
/// triangular, so each component costs one banded solve.
fn crank_nicolson(
    sys: &CascadeSystem,
    gamma: Complex64,
    y0: &[Vec<Complex64>],
    control: Option<&ControlSignal>,
    time: &TimeGrid,
    mut on_level: impl FnMut(usize, &[Vec<Complex64>]),
) -> Result<Field<Complex64>> {
    let (nc, nodes) = (sys.n_components(), sys.grid().len());
    let zero = Complex64::new(0.0, 0.0);
    let sg = gamma * (0.5 * time.dt);
    let op = sys.op();
    let lu = BandedLu::factor(nodes, op.bandwidth(), |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        Complex64::new(id, 0.0) + sg * op.entry(i, j)
    })?;
    let order = sys.solve_order();
    let zeros = || vec![vec![zero; nodes]; nc];

    let mut y = y0.to_vec();
    let mut my = zeros();
    let mut f_now = zeros();
    let mut f_next = zeros();
    add_control_forcing(sys, control, 0, |z| z, &mut f_now);
    on_level(0, &y);
    for m in 0..time.steps {
        sys.apply_m(&y, &mut my);
        f_next.iter_mut().for_each(|f| f.fill(zero));
        add_control_forcing(sys, control, m + 1, |z| z, &mut f_next);
        let mut new = zeros();
        for &i in &order {
            let mut r: Vec<Complex64> = (0..nodes)
                .map(|k| y[i][k] - sg * my[i][k] + sg * (f_now[i][k] + f_next[i][k]))
                .collect();
            for c in sys.coupling_fields().iter().filter(|c| c.target == i) {
                for ((rk, fk), sk) in r.iter_mut().zip(&c.field).zip(&new[c.source]) {
                    *rk -= sg * *sk * *fk;
                }
            }
            lu.solve_in_place(&mut r);
            new[i] = r;
        }
        y = new;
        std::mem::swap(&mut f_now, &mut f_next);
        on_level(m + 1, &y);
    }
    Ok(y)
}
