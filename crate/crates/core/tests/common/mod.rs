#![allow(dead_code)]

use cascade_core::dynamics::{CascadeSystem, ControlSignal, DiffusionState, Family, SystemState, WaveState};
use cascade_core::geometry::{build_grid, Region};
use cascade_core::operators::{
    assemble_operator, spectral_basis, ControlKind, ControlSpec, CouplingEntry, CouplingSpec,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Coupling `(target, source, a, b, amplitude)` on the interval `(a, b)`.
pub type Link = (usize, usize, f64, f64, f64);

pub fn interval(a: f64, b: f64, amp: f64) -> Region {
    Region::interval(1.0, a, b, amp).unwrap()
}

pub fn distributed(a: f64, b: f64, amp: f64) -> ControlKind {
    ControlKind::Distributed(interval(a, b, amp))
}

/// 1D system on `(0, 1)` with `n` interior nodes and `k` modes.
pub fn system(family: Family, n: usize, k: usize, links: &[Link], controls: Vec<ControlKind>) -> CascadeSystem {
    let grid = build_grid(&[1.0], &[n]).unwrap();
    let op = assemble_operator(&grid);
    let basis = spectral_basis(&op, k).unwrap();
    let entries = links
        .iter()
        .map(|&(target, source, a, b, c)| CouplingEntry {
            target,
            source,
            region: interval(a, b, c),
        })
        .collect();
    let coupling = CouplingSpec::new(controls.len(), entries).unwrap();
    CascadeSystem::new(family, op, basis, coupling, ControlSpec::new(controls)).unwrap()
}

/// Two-component cascade with coupling on (0.2, 0.4) and control on (0.7, 0.9).
pub fn cascade2(family: Family, n: usize, k: usize, c: f64) -> CascadeSystem {
    system(
        family,
        n,
        k,
        &[(0, 1, 0.2, 0.4, c)],
        vec![ControlKind::None, distributed(0.7, 0.9, 1.0)],
    )
}

pub fn heat() -> Family {
    Family::Dissipative { theta: 0.0 }
}

/// Wave state with position coefficients per component, at rest.
pub fn wave_modes(sys: &CascadeSystem, coeffs: &[&[f64]]) -> SystemState {
    let b = sys.basis();
    let nodes = sys.grid().len();
    SystemState::Wave(WaveState {
        t: 0.0,
        position: coeffs.iter().map(|c| b.synthesize(c)).collect(),
        velocity: vec![vec![0.0; nodes]; coeffs.len()],
    })
}

pub fn diffusion_modes(sys: &CascadeSystem, coeffs: &[&[f64]]) -> SystemState {
    let b = sys.basis();
    SystemState::Diffusion(DiffusionState {
        t: 0.0,
        values: coeffs
            .iter()
            .map(|c| b.synthesize(c).into_iter().map(Complex64::from).collect())
            .collect(),
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen::<f64>() * 2.0 - 1.0
}

/// Random state of nodal values; complex only when `complex` is set.
pub fn random_state(sys: &CascadeSystem, rng: &mut ChaCha8Rng, complex: bool) -> SystemState {
    let n = sys.n_components();
    let nodes = sys.grid().len();
    let field = |rng: &mut ChaCha8Rng| (0..nodes).map(|_| uniform(rng)).collect::<Vec<f64>>();
    match sys.family() {
        Family::Hyperbolic => SystemState::Wave(WaveState {
            t: 0.0,
            position: (0..n).map(|_| field(rng)).collect(),
            velocity: (0..n).map(|_| field(rng)).collect(),
        }),
        Family::Dissipative { .. } => SystemState::Diffusion(DiffusionState {
            t: 0.0,
            values: (0..n)
                .map(|_| {
                    (0..nodes)
                        .map(|_| Complex64::new(uniform(rng), if complex { uniform(rng) } else { 0.0 }))
                        .collect()
                })
                .collect(),
        }),
    }
}

/// Fills every channel sample with random values.
pub fn randomize_signal(signal: &mut ControlSignal, rng: &mut ChaCha8Rng, complex: bool) {
    for ch in &mut signal.channels {
        for v in &mut ch.values {
            *v = Complex64::new(uniform(rng), if complex { uniform(rng) } else { 0.0 });
        }
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
