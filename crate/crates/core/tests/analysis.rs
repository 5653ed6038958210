mod common;

use cascade_core::analysis::*;
use cascade_core::dynamics::*;
use cascade_core::geometry::{build_grid, Region};
use cascade_core::hum::{synthesize_control, GramianOperator, HumOptions};
use cascade_core::linalg::{dot, KrylovStatus};
use cascade_core::operators::{
    assemble_operator, spectral_basis, ControlKind, ControlSpec, CouplingEntry, CouplingSpec, End,
};
use cascade_core::Error;
use common::*;

fn full(amp: f64) -> Region {
    Region::full(&[1.0], amp).unwrap()
}

/// Free wave observed on the whole interval.
fn observed_everywhere(n: usize, k: usize) -> CascadeSystem {
    system(Family::Hyperbolic, n, k, &[], vec![ControlKind::Distributed(full(1.0))])
}

fn time(sys: &CascadeSystem, horizon: f64) -> TimeGrid {
    TimeGrid::new(horizon, 0.25 * max_stable_dt(sys)).unwrap()
}

const CONTROL: ObservationKind = ObservationKind::ControlAdjoint { component: 0 };

#[test]
fn whole_period_constant_is_half_the_horizon() {
    let sys = observed_everywhere(100, 3);
    // T = 2 is a common period of the first three continuum modes.
    let r = observability_constants(&sys, CONTROL, &time(&sys, 2.0), 3, 400).unwrap();
    assert_eq!(r.seed_dim, 6);
    assert!(rel_diff(r.c_est, 1.0) <= 0.1, "C = {}", r.c_est);
    assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    assert!(r.c_est >= -1e-12);
}

#[test]
fn constant_grows_with_the_horizon() {
    let sys = observed_everywhere(60, 3);
    let c: Vec<f64> = [0.5, 1.0, 2.0, 3.0, 4.0]
        .iter()
        .map(|&t| observability_constants(&sys, CONTROL, &time(&sys, t), 3, 400).unwrap().c_est)
        .collect();
    assert!(c.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{c:?}");
}

#[test]
fn coupling_projection_matches_full_domain_control() {
    let sys = system(
        Family::Hyperbolic,
        60,
        3,
        &[(0, 1, 0.0, 1.0, 2.5)],
        vec![ControlKind::None, ControlKind::Distributed(full(1.0))],
    );
    let t = time(&sys, 1.5);
    let a = observability_constants(&sys, CONTROL_LAST, &t, 3, 400).unwrap();
    let b = observability_constants(
        &sys,
        ObservationKind::CouplingProjection { target: 0, source: 1 },
        &t,
        3,
        400,
    )
    .unwrap();
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((x - y).abs() <= 1e-10 * a.eigenvalues.last().unwrap());
    }
}

const CONTROL_LAST: ObservationKind = ObservationKind::ControlAdjoint { component: 1 };

#[test]
fn reported_constant_bounds_every_rayleigh_quotient() {
    let sys = system(Family::Hyperbolic, 60, 4, &[], vec![distributed(0.3, 0.5, 1.0)]);
    let t = time(&sys, 2.0);
    let r = observability_constants(&sys, CONTROL, &t, 4, 400).unwrap();
    let g = GramianOperator::new(&sys, t, 4, 0.0).unwrap();
    let mut rg = rng(21);
    for _ in 0..20 {
        let z: Vec<f64> = (0..g.seed_space().real_len()).map(|_| uniform(&mut rg)).collect();
        let q = dot(&g.apply(&z).unwrap(), &z) / dot(&z, &z);
        assert!(q >= r.c_est - 1e-10, "{q} < {}", r.c_est);
    }
}

#[test]
fn dense_assembly_respects_the_limit() {
    let sys = observed_everywhere(40, 10);
    match observability_constants(&sys, CONTROL, &time(&sys, 1.0), 10, 12) {
        Err(Error::LimitExceeded { requested, limit }) => assert_eq!((requested, limit), (20, 12)),
        other => panic!("expected a limit error, got {other:?}"),
    }
}

fn global(n_comp: usize, links: &[(usize, usize, f64)]) -> CouplingSpec {
    let entries = links
        .iter()
        .map(|&(target, source, c)| CouplingEntry {
            target,
            source,
            region: full(c),
        })
        .collect();
    CouplingSpec::new(n_comp, entries).unwrap()
}

fn last_controlled(n_comp: usize) -> ControlSpec {
    let mut kinds = vec![ControlKind::None; n_comp];
    kinds[n_comp - 1] = ControlKind::Distributed(full(1.0));
    ControlSpec::new(kinds)
}

fn basis(k: usize) -> cascade_core::operators::SpectralBasis {
    spectral_basis(&assemble_operator(&build_grid(&[1.0], &[40]).unwrap()), k).unwrap()
}

#[test]
fn two_component_kalman_matrix() {
    let c = 0.7;
    let r = kalman_mode_test(&global(2, &[(0, 1, c)]), &last_controlled(2), &basis(5), 5).unwrap();
    assert!(r.pass);
    for m in &r.modes {
        // [B, A_μ B] = [[0, c], [1, μ]], determinant -c.
        assert_eq!(m.matrix, vec![vec![0.0, c], vec![1.0, m.mu]]);
        assert_eq!(m.rank, 2);
    }
    let r = kalman_mode_test(&global(2, &[(0, 1, 0.0)]), &last_controlled(2), &basis(5), 5).unwrap();
    assert!(!r.pass);
    assert!(r.modes.iter().all(|m| m.rank == 1));
}

#[test]
fn chain_is_controllable_iff_both_links_are_active() {
    for (c21, c32) in [(1.0, 1.0), (0.5, 2.0), (1.0, 0.0), (0.0, 1.0), (0.0, 0.0)] {
        let spec = global(3, &[(0, 1, c21), (1, 2, c32)]);
        let r = kalman_mode_test(&spec, &last_controlled(3), &basis(4), 4).unwrap();
        assert_eq!(r.pass, c21 * c32 != 0.0, "({c21}, {c32})");
        assert!(r.modes.iter().all(|m| m.rank <= 3 && m.full_rank == (m.rank == 3)));
    }
}

#[test]
fn localized_coupling_is_not_applicable() {
    let spec = CouplingSpec::new(
        2,
        vec![CouplingEntry {
            target: 0,
            source: 1,
            region: interval(0.2, 0.4, 1.0),
        }],
    )
    .unwrap();
    assert!(matches!(
        kalman_mode_test(&spec, &last_controlled(2), &basis(3), 3),
        Err(Error::NotApplicable(_))
    ));
}

/// Kalman verdict against the outcome of exact HUM on the same
/// constant-coupling systems.
#[test]
fn kalman_verdict_agrees_with_hum() {
    let cases: [(&[Link], usize); 4] = [
        (&[(0, 1, 0.0, 1.0, 1.0)], 2),
        (&[(0, 1, 0.0, 1.0, 0.0)], 2),
        (&[(0, 1, 0.0, 1.0, 1.0), (1, 2, 0.0, 1.0, 1.0)], 3),
        (&[(0, 1, 0.0, 1.0, 1.0), (1, 2, 0.0, 1.0, 0.0)], 3),
    ];
    for (links, n_comp) in cases {
        let mut controls = vec![ControlKind::None; n_comp];
        controls[n_comp - 1] = distributed(0.7, 0.9, 1.0);
        let sys = system(Family::Hyperbolic, 60, 4, links, controls);
        let kalman = kalman_mode_test(sys.coupling(), sys.control(), sys.basis(), 4).unwrap();
        let coeffs: Vec<&[f64]> = (0..n_comp).map(|_| &[1.0][..]).collect();
        let y0 = wave_modes(&sys, &coeffs);
        let t = TimeGrid::new(12.0, 0.5 * max_stable_dt(&sys)).unwrap();
        let r = synthesize_control(&sys, &y0, &t, &HumOptions::new(4, 0.0, 1e-8, 3000)).unwrap();
        let stagnated = r.status == KrylovStatus::Stagnated;
        assert_eq!(!kalman.pass, stagnated, "{links:?}: {:?}", r.status);
        if kalman.pass {
            assert_eq!(r.status, KrylovStatus::Converged);
        }
    }
}

#[test]
fn distributed_admissibility_ratio_stays_below_one() {
    let sys = system(Family::Hyperbolic, 50, 1, &[], vec![distributed(0.3, 0.8, 1.0)]);
    let levels = admissibility_ratio(&sys, 5, 1.0, 1e-2, &[50, 100], 3).unwrap();
    for l in &levels {
        assert_eq!(l.skipped, 0);
        assert!(l.max_ratio <= 1.0 + 1e-10, "{l:?}");
    }
}

#[test]
fn boundary_admissibility_ratio_is_stable_under_refinement() {
    let sys = system(
        Family::Hyperbolic,
        50,
        1,
        &[],
        vec![ControlKind::BoundaryEnd { end: End::Right, gain: 1.0 }],
    );
    let levels = admissibility_ratio(&sys, 3, 1.0, 1e-2, &[50, 100, 200], 5).unwrap();
    let max: Vec<f64> = levels.iter().map(|l| l.max_ratio).collect();
    assert!(max.iter().all(|m| *m > 0.0));
    assert!(admissibility_is_stable(&max), "{max:?}");
}

#[test]
fn zero_data_is_a_skipped_sample() {
    let grid = build_grid(&[1.0], &[30]).unwrap();
    let t = TimeGrid::new(0.5, 0.01).unwrap();
    let r = admissibility_sample(
        &ControlKind::Distributed(full(1.0)),
        &grid,
        &AdmissibilityData::zero(3),
        &t,
    )
    .unwrap();
    assert_eq!(r, None);
}

#[test]
fn hypotheses_hold_for_the_disjoint_cascade() {
    let sys = system(
        Family::Hyperbolic,
        99,
        3,
        &[(0, 1, 0.2, 0.4, 2.0)],
        vec![ControlKind::None, distributed(0.7, 0.9, 1.0)],
    );
    let levels = admissibility_ratio(&sys, 3, 1.0, 1e-2, &[50, 100], 1).unwrap();
    let rep = hypothesis_report(&sys, 100, &levels, 1).unwrap();
    assert!(rep.pass());
    assert!(rel_diff(rep.omega_a1, std::f64::consts::PI.powi(2)) < 5e-3);
    assert_eq!(rep.beta, 2.0);
}
