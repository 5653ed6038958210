//! Observability constants on filtered subspaces, modal Kalman rank tests
//! and admissibility ratios of the observation operators.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    energy, max_stable_dt, solve_hyperbolic, CascadeSystem, ControlSignal, Family, SolveOptions,
    SystemState, TimeGrid, WaveState,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{build_grid, BoxPart, Grid, Region};
use crate::hum::GramianOperator;
use crate::operators::{
    assemble_operator, observe, spectral_basis, verify_a1, verify_a4, ControlKind, ControlSpec,
    CouplingSpec, HypothesisReport, Observation, SpectralBasis,
};

/// Which observation of a single free equation enters the Gramian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationKind {
    /// `B_k^*` of the control acting on `component` (0-based).
    ControlAdjoint { component: usize },
    /// Unit indicator of the coupling region of entry `(target, source)`.
    CouplingProjection { target: usize, source: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub horizon: f64,
    pub dt: f64,
    pub k_filter: usize,
    pub observation: ObservationKind,
    /// Smallest eigenvalue of the filtered Gramian.
    pub c_est: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub seed_dim: usize,
    pub assembly: String,
}

/// Single free equation of `sys` observed as selected by `which`.
pub fn observed_equation(sys: &CascadeSystem, which: ObservationKind) -> Result<CascadeSystem> {
    let kind = match which {
        ObservationKind::ControlAdjoint { component } => match sys.control().components.get(component)
        {
            Some(k) if k.is_control() => k.clone(),
            _ => return invalid(format!("component {} carries no control", component + 1)),
        },
        ObservationKind::CouplingProjection { target, source } => {
            let Some(e) = sys
                .coupling()
                .entries()
                .iter()
                .find(|e| e.target == target && e.source == source)
            else {
                return invalid(format!("no coupling ({}, {})", target + 1, source + 1));
            };
            let parts = e
                .region
                .parts
                .iter()
                .map(|p| BoxPart::new(p.lo.clone(), p.hi.clone(), 1.0))
                .collect();
            ControlKind::Distributed(Region::new(&e.region.extents, parts)?)
        }
    };
    CascadeSystem::new(
        sys.family(),
        sys.op().clone(),
        sys.basis().clone(),
        CouplingSpec::uncoupled(1)?,
        ControlSpec::new(vec![kind]),
    )
}

/// Smallest eigenvalue of the dense filtered Gramian of one free equation,
/// the best constant of the observability inequality on the filter space.
pub fn observability_constants(
    sys: &CascadeSystem,
    which: ObservationKind,
    time: &TimeGrid,
    k_filter: usize,
    limit: usize,
) -> Result<ObservabilityReport> {
    let single = observed_equation(sys, which)?;
    let gram = GramianOperator::new(&single, *time, k_filter, 0.0)?;
    let g = gram.assemble_dense(limit)?;
    let sym = (&g + g.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(ObservabilityReport {
        horizon: time.horizon(),
        dt: time.dt,
        k_filter,
        observation: which,
        c_est: eigenvalues[0],
        seed_dim: gram.seed_space().real_len(),
        eigenvalues,
        assembly: "dense column probes".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanMode {
    pub mode: usize,
    pub mu: f64,
    /// `N x (N m)` controllability matrix `[B, A_μ B, ...]`, row-major.
    pub matrix: Vec<Vec<f64>>,
    pub rank: usize,
    pub full_rank: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanReport {
    pub n_components: usize,
    pub controlled: Vec<usize>,
    pub modes: Vec<KalmanMode>,
    pub pass: bool,
}

/// Kalman rank test on each of the first `k` eigenmodes. Exact only for
/// couplings that are constant on the whole domain.
pub fn kalman_mode_test(
    coupling: &CouplingSpec,
    control: &ControlSpec,
    basis: &SpectralBasis,
    k: usize,
) -> Result<KalmanReport> {
    let n = coupling.n_components();
    if control.n_components() != n {
        return invalid("coupling and control describe different component counts");
    }
    if k == 0 || k > basis.len() {
        return invalid(format!("need 1..={} modes, got {k}", basis.len()));
    }
    let mut c = DMatrix::<f64>::zeros(n, n);
    for e in coupling.entries() {
        let r = &e.region;
        if !r.is_full_domain() || r.max_amplitude() != r.min_amplitude() {
            return Err(Error::NotApplicable(format!(
                "coupling ({}, {}) is localized or non-constant; modes do not decouple",
                e.target + 1,
                e.source + 1
            )));
        }
        c[(e.target, e.source)] = r.max_amplitude();
    }
    let controlled = control.controlled();
    if controlled.is_empty() {
        return invalid("no controlled component");
    }
    let m = controlled.len();
    let mut b = DMatrix::<f64>::zeros(n, m);
    for (col, comp) in controlled.iter().enumerate() {
        b[(*comp, col)] = 1.0;
    }
    let modes = (0..k)
        .map(|j| {
            let mu = basis.eigenvalue(j);
            let a = DMatrix::<f64>::identity(n, n) * mu + &c;
            let mut kr = DMatrix::<f64>::zeros(n, n * m);
            let mut block = b.clone();
            for p in 0..n {
                kr.view_mut((0, p * m), (n, m)).copy_from(&block);
                block = &a * block;
            }
            let rank = numeric_rank(&kr);
            KalmanMode {
                mode: j,
                mu,
                matrix: (0..n)
                    .map(|i| kr.row(i).iter().copied().collect())
                    .collect(),
                rank,
                full_rank: rank == n,
            }
        })
        .collect::<Vec<_>>();
    Ok(KalmanReport {
        n_components: n,
        controlled,
        pass: modes.iter().all(|md| md.full_rank),
        modes,
    })
}

/// Rank after scaling columns to unit length; singular values below
/// `1e-9` of the largest count as zero.
fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let mut s = m.clone();
    for mut col in s.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= nrm;
        }
    }
    let sv = s.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|v| **v > 1e-9 * top).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityLevel {
    pub n: usize,
    pub dt: f64,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub skipped: usize,
}

/// Random data for one admissibility sample, independent of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityData {
    /// Coefficients of the first modes of position and velocity.
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Forcing `Σ_k a_k cos(ω_k t + δ_k) φ_k`, as `(a_k, ω_k, δ_k)`.
    pub forcing: Vec<(f64, f64, f64)>,
}

impl AdmissibilityData {
    pub fn random(modes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = || rng.gen::<f64>() * 2.0 - 1.0;
        let position = (1..=modes).map(|k| u() / k as f64).collect();
        let velocity = (1..=modes).map(|k| u() / k as f64).collect();
        let forcing = (1..=modes)
            .map(|k| (u(), 3.0 * k as f64 * (1.0 + 0.5 * u()), 3.0 * u()))
            .collect();
        Self {
            position,
            velocity,
            forcing,
        }
    }

    pub fn zero(modes: usize) -> Self {
        Self {
            position: vec![0.0; modes],
            velocity: vec![0.0; modes],
            forcing: vec![(0.0, 1.0, 0.0); modes],
        }
    }
}

/// Continuous Dirichlet modes, ordered along the first axis then the second.
fn continuum_mode(grid: &Grid, k: usize, idx: usize) -> f64 {
    let p = grid.node(idx);
    let l = grid.extents();
    let s = |j: usize, x: f64, len: f64| (2.0 / len).sqrt() * (j as f64 * std::f64::consts::PI * x / len).sin();
    match grid.dim() {
        1 => s(k + 1, p[0], l[0]),
        _ => s(k + 1, p[0], l[0]) * s(1, p[1], l[1]),
    }
}

/// `LHS / RHS` of the admissibility inequality for one forced solution of
/// the single equation observed through `kind`; `None` when both vanish.
pub fn admissibility_sample(
    kind: &ControlKind,
    grid: &Grid,
    data: &AdmissibilityData,
    time: &TimeGrid,
) -> Result<Option<f64>> {
    let op = assemble_operator(grid);
    let basis = spectral_basis(&op, 1)?;
    let full = Region::full(grid.extents(), 1.0)?;
    let forcing_sys = CascadeSystem::new(
        Family::Hyperbolic,
        op,
        basis,
        CouplingSpec::uncoupled(1)?,
        ControlSpec::new(vec![ControlKind::Distributed(full)]),
    )?;
    let spec = ControlSpec::new(vec![kind.clone()]);
    spec.validate(grid)?;

    let field = |c: &[f64]| -> Vec<f64> {
        (0..grid.len())
            .map(|i| c.iter().enumerate().map(|(k, a)| a * continuum_mode(grid, k, i)).sum())
            .collect()
    };
    let initial = SystemState::Wave(WaveState {
        t: 0.0,
        position: vec![field(&data.position)],
        velocity: vec![field(&data.velocity)],
    });
    let mut f = ControlSignal::zeros(&forcing_sys, *time);
    let shapes: Vec<Vec<f64>> = (0..data.forcing.len())
        .map(|k| (0..grid.len()).map(|i| continuum_mode(grid, k, i)).collect())
        .collect();
    for m in 0..time.samples() {
        let t = time.time(m);
        let sample = f.channels[0].sample_mut(m);
        for ((a, w, d), shape) in data.forcing.iter().zip(&shapes) {
            let amp = a * (w * t + d).cos();
            for (s, x) in sample.iter_mut().zip(shape) {
                s.re += amp * x;
            }
        }
    }
    let sol = solve_hyperbolic(
        &forcing_sys,
        &initial,
        Some(&f),
        time,
        &SolveOptions::snapshots(1),
    )?;
    let mut lhs = 0.0;
    let mut int_e = 0.0;
    for (m, snap) in sol.snapshots.iter().enumerate() {
        let SystemState::Wave(s) = snap else {
            unreachable!("hyperbolic snapshots")
        };
        let w = time.weight(m);
        lhs += w * match observe(&spec, 0, &s.position[0], &s.velocity[0], grid)? {
            Observation::Field(v) => grid.dot(&v, &v),
            Observation::Scalar(v) => v * v,
        };
        int_e += w * energy(&forcing_sys, snap)?.total;
    }
    let e0 = energy(&forcing_sys, &initial)?.total;
    let et = energy(&forcing_sys, &sol.terminal)?.total;
    let rhs = e0 + et + int_e + f.norm_sq();
    Ok(if rhs == 0.0 { None } else { Some(lhs / rhs) })
}

/// Largest admissibility ratio per refinement level for the observation
/// of the last controlled component of `sys`. Levels give the node count
/// per axis; the data are the same continuum functions on every level.
pub fn admissibility_ratio(
    sys: &CascadeSystem,
    n_samples: usize,
    horizon: f64,
    dt: f64,
    levels: &[usize],
    seed: u64,
) -> Result<Vec<AdmissibilityLevel>> {
    if n_samples == 0 {
        return invalid("need at least one sample");
    }
    let kind = sys
        .control()
        .components
        .last()
        .cloned()
        .filter(ControlKind::is_control)
        .ok_or_else(|| Error::InvalidArgument("last component carries no control".into()))?;
    let extents = sys.grid().extents().to_vec();
    let samples: Vec<AdmissibilityData> = (0..n_samples)
        .map(|s| AdmissibilityData::random(5, seed.wrapping_add(s as u64)))
        .collect();
    levels
        .iter()
        .map(|&n| {
            let grid = build_grid(&extents, &vec![n; extents.len()])?;
            let probe = CascadeSystem::new(
                Family::Hyperbolic,
                assemble_operator(&grid),
                spectral_basis(&assemble_operator(&grid), 1)?,
                CouplingSpec::uncoupled(1)?,
                ControlSpec::new(vec![kind.clone()]),
            )?;
            let time = TimeGrid::new(horizon, dt.min(0.5 * max_stable_dt(&probe)))?;
            let mut ratios = Vec::new();
            let mut skipped = 0;
            for d in &samples {
                match admissibility_sample(&kind, &grid, d, &time)? {
                    Some(r) => ratios.push(r),
                    None => skipped += 1,
                }
            }
            Ok(AdmissibilityLevel {
                n,
                dt: time.dt,
                max_ratio: ratios.iter().copied().fold(0.0, f64::max),
                ratios,
                skipped,
            })
        })
        .collect()
}

/// Certifies coercivity of `A`, the coupling bounds of every entry and the
/// boundedness of the admissibility ratios.
pub fn hypothesis_report(
    sys: &CascadeSystem,
    a4_samples: usize,
    a2_levels: &[AdmissibilityLevel],
    seed: u64,
) -> Result<HypothesisReport> {
    let omega_a1 = verify_a1(sys.basis());
    let a1_holds = omega_a1.is_ok();
    let mut couplings = Vec::new();
    let mut a4_holds = true;
    for e in sys.coupling().entries() {
        match verify_a4(&e.region, sys.basis(), a4_samples, seed) {
            Ok(b) => {
                a4_holds &= b.holds();
                couplings.push(((e.target, e.source), b));
            }
            Err(Error::HypothesisViolated(_)) => a4_holds = false,
            Err(err) => return Err(err),
        }
    }
    let beta = couplings.iter().map(|(_, b)| b.beta).fold(0.0, f64::max);
    let alpha = couplings
        .iter()
        .map(|(_, b)| b.alpha)
        .fold(f64::INFINITY, f64::min);
    let a2_ratio_samples: Vec<f64> = a2_levels.iter().map(|l| l.max_ratio).collect();
    let a2_bounded = match sys.control().components.last() {
        Some(ControlKind::Distributed(r)) => a2_ratio_samples
            .iter()
            .all(|x| *x <= r.max_amplitude().powi(2) * (1.0 + 1e-10)),
        _ => admissibility_is_stable(&a2_ratio_samples),
    };
    Ok(HypothesisReport {
        omega_a1: omega_a1.unwrap_or(f64::NAN),
        pi_support: couplings.first().map(|(_, b)| b.pi_support.clone()),
        beta,
        alpha: if couplings.is_empty() { 0.0 } else { alpha },
        couplings,
        a2_ratio_samples,
        a1_holds,
        a4_holds,
        a2_bounded,
        a4_checked_spaces: vec![0],
    })
}

/// Max ratios vary by less than 50% across refinement levels.
pub fn admissibility_is_stable(max_ratios: &[f64]) -> bool {
    let lo = max_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = max_ratios.iter().copied().fold(0.0, f64::max);
    max_ratios.iter().all(|x| x.is_finite()) && (max_ratios.is_empty() || hi <= 1.5 * lo)
}
