mod common;

use cascade_core::dynamics::*;
use cascade_core::hum::adjoint_system;
use cascade_core::operators::{ControlKind, End};
use cascade_core::Error;
use common::*;
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

fn single(family: Family, n: usize, k: usize) -> CascadeSystem {
    system(family, n, k, &[], vec![distributed(0.7, 0.9, 1.0)])
}

fn wave(s: &SystemState) -> &WaveState {
    match s {
        SystemState::Wave(w) => w,
        _ => panic!("expected a wave state"),
    }
}

fn diffusion(s: &SystemState) -> &DiffusionState {
    match s {
        SystemState::Diffusion(d) => d,
        _ => panic!("expected a diffusion state"),
    }
}

fn l2_sq(sys: &CascadeSystem, w: &[Complex64]) -> f64 {
    sys.grid().cell_volume() * w.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

#[test]
fn energy_of_single_modes() {
    let sys = single(Family::Hyperbolic, 40, 3);
    let e1 = sys.basis().mode(0).to_vec();
    let zero = vec![0.0; e1.len()];
    let lam = sys.basis().eigenvalue(0);
    let st = |p: &[f64], v: &[f64]| {
        SystemState::Wave(WaveState {
            t: 0.0,
            position: vec![p.to_vec()],
            velocity: vec![v.to_vec()],
        })
    };
    let e = energy(&sys, &st(&e1, &zero)).unwrap();
    assert!(rel_diff(e.total, lam / 2.0) < 1e-12);
    let e = energy(&sys, &st(&zero, &e1)).unwrap();
    assert!(rel_diff(e.total, 0.5) < 1e-12);
    assert_eq!(energy(&sys, &SystemState::zeros(&sys)).unwrap().total, 0.0);
}

fn wave_mode_error(dt: f64) -> f64 {
    let sys = single(Family::Hyperbolic, 50, 2);
    let k = 1;
    let mut c = vec![0.0; 2];
    c[k] = 1.0;
    let y0 = wave_modes(&sys, &[&c]);
    let time = TimeGrid::new(1.0, dt).unwrap();
    let out = solve(&sys, &y0, None, &time, &SolveOptions::default()).unwrap();
    let exact = (sys.basis().eigenvalue(k).sqrt() * time.horizon()).cos();
    let e = sys.basis().mode(k);
    let got = &wave(&out.terminal).position[0];
    let diff: Vec<f64> = got.iter().zip(e).map(|(g, x)| g - exact * x).collect();
    sys.grid().norm(&diff)
}

fn heat_mode_error(dt: f64) -> f64 {
    let sys = single(heat(), 50, 1);
    let y0 = diffusion_modes(&sys, &[&[1.0]]);
    let time = TimeGrid::new(1.0, dt).unwrap();
    let out = solve(&sys, &y0, None, &time, &SolveOptions::default()).unwrap();
    let exact = (-sys.basis().eigenvalue(0) * time.horizon()).exp();
    let e = sys.basis().mode(0);
    let diff: Vec<Complex64> = diffusion(&out.terminal).values[0]
        .iter()
        .zip(e)
        .map(|(g, x)| g - exact * x)
        .collect();
    l2_sq(&sys, &diff).sqrt()
}

#[test]
fn leapfrog_is_second_order_on_a_single_mode() {
    let errs: Vec<f64> = [0.01, 0.005, 0.0025].iter().map(|&dt| wave_mode_error(dt)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() <= 0.8, "ratio {ratio}, errors {errs:?}");
    }
}

#[test]
fn crank_nicolson_is_second_order_on_a_single_mode() {
    let errs: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&dt| heat_mode_error(dt)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() <= 0.8, "ratio {ratio}, errors {errs:?}");
    }
}

#[test]
fn schrodinger_step_preserves_the_norm() {
    for theta in [FRAC_PI_2, -FRAC_PI_2] {
        let sys = single(Family::Dissipative { theta }, 50, 1);
        let y0 = random_state(&sys, &mut rng(7), true);
        let time = TimeGrid::new(10.0, 1e-3).unwrap();
        assert_eq!(time.steps, 10_000);
        let out = solve(&sys, &y0, None, &time, &SolveOptions::default()).unwrap();
        let before = l2_sq(&sys, &diffusion(&y0).values[0]).sqrt();
        let after = l2_sq(&sys, &diffusion(&out.terminal).values[0]).sqrt();
        assert!(rel_diff(before, after) <= 1e-12, "{before} vs {after}");
    }
}

#[test]
fn heat_norm_decreases_for_one_component() {
    let sys = single(heat(), 40, 1);
    let y0 = random_state(&sys, &mut rng(3), false);
    let time = TimeGrid::new(0.2, 1e-3).unwrap();
    let out = solve(&sys, &y0, None, &time, &SolveOptions::snapshots(1)).unwrap();
    let norms: Vec<f64> = out
        .snapshots
        .iter()
        .map(|s| l2_sq(&sys, &diffusion(s).values[0]))
        .collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn coupled_heat_component_obeys_the_forcing_bound() {
    let c = 3.0;
    let sys = cascade2(heat(), 40, 2, c);
    let y0 = random_state(&sys, &mut rng(5), false);
    let time = TimeGrid::new(0.3, 1e-3).unwrap();
    let out = solve(&sys, &y0, None, &time, &SolveOptions::snapshots(1)).unwrap();
    let grid = sys.grid();
    let max_forcing = out
        .snapshots
        .iter()
        .map(|s| {
            let w2 = &diffusion(s).values[1];
            let f: Vec<Complex64> = (0..grid.len())
                .map(|i| {
                    let x = grid.node(i)[0];
                    if 0.2 < x && x < 0.4 {
                        w2[i] * c
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            l2_sq(&sys, &f).sqrt()
        })
        .fold(0.0, f64::max);
    let start = l2_sq(&sys, &diffusion(&y0).values[0]).sqrt();
    for s in &out.snapshots {
        let now = l2_sq(&sys, &diffusion(s).values[0]).sqrt();
        assert!(now <= start + s.t() * max_forcing + 1e-12);
    }
}

#[test]
fn zero_data_stays_exactly_zero() {
    for family in [Family::Hyperbolic, heat(), Family::Dissipative { theta: 0.7 }] {
        let sys = cascade2(family, 30, 2, 1.0);
        let dt = if family.is_hyperbolic() { 0.01 } else { 0.005 };
        let time = TimeGrid::new(0.5, dt).unwrap();
        let zero = SystemState::zeros(&sys);
        let ctl = ControlSignal::zeros(&sys, time);
        let out = solve(&sys, &zero, Some(&ctl), &time, &SolveOptions::default()).unwrap();
        assert_eq!(energy(&sys, &out.terminal).unwrap().total, 0.0);
    }
}

/// `½|(Y^{n+1} - Y^n)/dt|² + ½⟨A Y^{n+1}, Y^n⟩` is exactly conserved by leapfrog.
#[test]
fn leapfrog_energy_is_conserved_over_ten_thousand_steps() {
    let sys = single(Family::Hyperbolic, 50, 1);
    let y0 = random_state(&sys, &mut rng(11), false);
    let dt = 0.5 * max_stable_dt(&sys);
    let time = TimeGrid::new(10_000.0 * dt, dt).unwrap();
    assert_eq!(time.steps, 10_000);
    let out = solve(&sys, &y0, None, &time, &SolveOptions::snapshots(1)).unwrap();
    let grid = sys.grid();
    let pos: Vec<&Vec<f64>> = out.snapshots.iter().map(|s| &wave(s).position[0]).collect();
    assert_eq!(pos.len(), 10_001);
    let dt = time.dt;
    let energies: Vec<f64> = pos
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[1].iter().zip(w[0]).map(|(a, b)| (a - b) / dt).collect();
            0.5 * grid.dot(&d, &d) + 0.5 * grid.dot(&sys.op().apply(w[1]), w[0])
        })
        .collect();
    let e0 = energies[0];
    let drift = energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-10 * e0, "drift {drift:e} of {e0}");
}

fn random_control(sys: &CascadeSystem, time: TimeGrid, seed: u64, complex: bool) -> ControlSignal {
    let mut c = ControlSignal::zeros(sys, time);
    randomize_signal(&mut c, &mut rng(seed), complex);
    c
}

#[test]
fn cascade_component_ignores_an_idle_source_bitwise() {
    for family in [Family::Hyperbolic, heat()] {
        let pair = cascade2(family, 40, 3, 1.0);
        let alone = single(family, 40, 3);
        let time = TimeGrid::new(0.5, 0.01).unwrap();
        let (y_pair, y_alone) = match family {
            Family::Hyperbolic => (
                wave_modes(&pair, &[&[1.0, -0.4, 0.2], &[]]),
                wave_modes(&alone, &[&[1.0, -0.4, 0.2]]),
            ),
            _ => (
                diffusion_modes(&pair, &[&[1.0, -0.4, 0.2], &[]]),
                diffusion_modes(&alone, &[&[1.0, -0.4, 0.2]]),
            ),
        };
        let a = solve(&pair, &y_pair, None, &time, &SolveOptions::snapshots(1)).unwrap();
        let b = solve(&alone, &y_alone, None, &time, &SolveOptions::snapshots(1)).unwrap();
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            match (sa, sb) {
                (SystemState::Wave(x), SystemState::Wave(y)) => {
                    assert_eq!(x.position[0], y.position[0]);
                    assert_eq!(x.velocity[0], y.velocity[0]);
                }
                (SystemState::Diffusion(x), SystemState::Diffusion(y)) => {
                    assert_eq!(x.values[0], y.values[0])
                }
                _ => unreachable!(),
            }
        }
    }
}

#[test]
fn zero_coupling_decouples_every_component_bitwise() {
    let pair = cascade2(Family::Hyperbolic, 40, 3, 0.0);
    let time = TimeGrid::new(0.5, 0.01).unwrap();
    let y0 = wave_modes(&pair, &[&[1.0, 0.3], &[0.2, -0.5, 0.1]]);
    let ctl = random_control(&pair, time, 4, false);
    let out = solve(&pair, &y0, Some(&ctl), &time, &SolveOptions::default()).unwrap();

    let free = single(Family::Hyperbolic, 40, 3);
    let y1 = wave_modes(&free, &[&[1.0, 0.3]]);
    let first = solve(&free, &y1, None, &time, &SolveOptions::default()).unwrap();
    assert_eq!(wave(&first.terminal).position[0], wave(&out.terminal).position[0]);

    let ctl_sys = single(Family::Hyperbolic, 40, 3);
    let y2 = wave_modes(&ctl_sys, &[&[0.2, -0.5, 0.1]]);
    let mut c2 = ControlSignal::zeros(&ctl_sys, time);
    c2.channels[0].values.clone_from(&ctl.channels[0].values);
    let second = solve(&ctl_sys, &y2, Some(&c2), &time, &SolveOptions::default()).unwrap();
    assert_eq!(wave(&second.terminal).position[0], wave(&out.terminal).position[1]);
    assert_eq!(wave(&second.terminal).velocity[0], wave(&out.terminal).velocity[1]);
}

#[test]
fn heat_source_reaches_the_target_only_through_the_coupling() {
    for c in [0.0, 2.0] {
        let sys = cascade2(heat(), 40, 2, c);
        let y0 = diffusion_modes(&sys, &[&[], &[1.0, 0.5]]);
        let time = TimeGrid::new(0.2, 0.005).unwrap();
        let out = solve(&sys, &y0, None, &time, &SolveOptions::default()).unwrap();
        let m = l2_sq(&sys, &diffusion(&out.terminal).values[0]);
        assert_eq!(m == 0.0, c == 0.0, "c = {c}, mass {m}");
    }
}

#[test]
fn cfl_violation_reports_the_admissible_step() {
    let sys = single(Family::Hyperbolic, 50, 1);
    let max = max_stable_dt(&sys);
    let time = TimeGrid::new(1.0, 1.5 * max).unwrap();
    let y0 = SystemState::zeros(&sys);
    match solve(&sys, &y0, None, &time, &SolveOptions::default()) {
        Err(Error::Cfl { max_dt, .. }) => assert_eq!(max_dt, max),
        other => panic!("expected a CFL error, got {other:?}"),
    }
}

#[test]
fn mismatched_control_grid_is_rejected() {
    let sys = single(Family::Hyperbolic, 30, 1);
    let time = TimeGrid::new(1.0, 0.01).unwrap();
    let other = TimeGrid::new(1.0, 0.02).unwrap();
    let ctl = ControlSignal::zeros(&sys, other);
    let y0 = SystemState::zeros(&sys);
    assert!(matches!(
        solve(&sys, &y0, Some(&ctl), &time, &SolveOptions::default()),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn adjoint_needs_a_transposed_system() {
    let sys = single(Family::Hyperbolic, 20, 1);
    let time = TimeGrid::new(0.5, 0.01).unwrap();
    let seed = SystemState::zeros(&sys);
    assert!(solve_adjoint(&sys, &seed, &time, &SolveOptions::default()).is_err());
    let adj = adjoint_system(&sys).unwrap();
    let out = solve_adjoint(&adj, &seed, &time, &SolveOptions::default()).unwrap();
    assert_eq!(out.observations.norm_sq(), 0.0);
}

/// Velocity observation of the free first mode over one period:
/// `∫ λ sin²(√λ t) dt = π √λ`.
#[test]
fn velocity_observation_of_the_first_mode_over_one_period() {
    let sys = system(
        Family::Hyperbolic,
        60,
        1,
        &[],
        vec![ControlKind::Distributed(
            cascade_core::geometry::Region::full(&[1.0], 1.0).unwrap(),
        )],
    );
    let adj = adjoint_system(&sys).unwrap();
    let lam = sys.basis().eigenvalue(0);
    let period = 2.0 * PI / lam.sqrt();
    let time = TimeGrid::new(period, 1e-3).unwrap();
    let seed = WaveState {
        t: period,
        position: vec![sys.basis().mode(0).to_vec()],
        velocity: vec![vec![0.0; sys.grid().len()]],
    };
    let d = derivative_seed(&adj, &seed).unwrap();
    let out = solve_adjoint(&adj, &SystemState::Wave(d), &time, &SolveOptions::default()).unwrap();
    let got = out.observations.norm_sq();
    let want = PI * lam.sqrt();
    assert!(rel_diff(got, want) < 1e-4, "{got} vs {want}");
}

/// `⟨y'(T), φ_T⟩ - ⟨y(T), ψ_T⟩` (waves) or `Re⟨y(T), φ_T⟩` (diffusion)
/// against the time pairing of the forcing with the adjoint observation.
fn duality_gap(sys: &CascadeSystem, time: TimeGrid, seed: u64, complex: bool) -> f64 {
    let adj = adjoint_system(sys).unwrap();
    let mut r = rng(seed);
    let mut f = ControlSignal::zeros(sys, time);
    randomize_signal(&mut f, &mut r, complex);
    let phi = random_state(sys, &mut r, complex);
    let zero = SystemState::zeros(sys);
    let fwd = solve(sys, &zero, Some(&f), &time, &SolveOptions::default()).unwrap();
    let obs = solve_adjoint(&adj, &phi, &time, &SolveOptions::default()).unwrap();
    let rhs = f.inner(&obs.observations);
    let g = sys.grid();
    let lhs: f64 = match (&fwd.terminal, &phi) {
        (SystemState::Wave(y), SystemState::Wave(p)) => (0..sys.n_components())
            .map(|k| g.dot(&y.velocity[k], &p.position[k]) - g.dot(&y.position[k], &p.velocity[k]))
            .sum(),
        (SystemState::Diffusion(y), SystemState::Diffusion(p)) => (0..sys.n_components())
            .map(|k| {
                g.cell_volume()
                    * y.values[k]
                        .iter()
                        .zip(&p.values[k])
                        .map(|(a, b)| (a * b.conj()).re)
                        .sum::<f64>()
            })
            .sum(),
        _ => unreachable!(),
    };
    rel_diff(lhs, rhs)
}

#[test]
fn discrete_duality_holds_for_both_families() {
    let families = [
        (Family::Hyperbolic, false),
        (heat(), false),
        (Family::Dissipative { theta: 0.6 }, true),
        (Family::Dissipative { theta: FRAC_PI_2 }, true),
    ];
    for (family, complex) in families {
        let sys = system(
            family,
            50,
            2,
            &[(0, 1, 0.2, 0.4, 1.3), (1, 2, 0.1, 0.5, 0.7)],
            vec![ControlKind::None, distributed(0.3, 0.6, 0.8), distributed(0.7, 0.9, 1.0)],
        );
        let dt = if family.is_hyperbolic() { 0.5 * max_stable_dt(&sys) } else { 0.01 };
        let time = TimeGrid::new(1.0, dt).unwrap();
        for seed in 0..5 {
            let gap = duality_gap(&sys, time, seed, complex);
            assert!(gap <= 1e-10, "{family:?}: relative gap {gap:e}");
        }
    }
}

#[test]
fn discrete_duality_holds_for_boundary_control() {
    for family in [Family::Hyperbolic, heat()] {
        let sys = system(
            family,
            40,
            2,
            &[(0, 1, 0.2, 0.4, 1.0)],
            vec![ControlKind::None, ControlKind::BoundaryEnd { end: End::Right, gain: 1.5 }],
        );
        let dt = if family.is_hyperbolic() { 0.5 * max_stable_dt(&sys) } else { 0.01 };
        let time = TimeGrid::new(1.0, dt).unwrap();
        for seed in 10..13 {
            let gap = duality_gap(&sys, time, seed, false);
            assert!(gap <= 1e-10, "{family:?}: relative gap {gap:e}");
        }
    }
}

#[test]
fn signal_csv_round_trips_exactly() {
    let sys = cascade2(Family::Dissipative { theta: 0.3 }, 20, 2, 1.0);
    let time = TimeGrid::new(0.1, 0.01).unwrap();
    let sig = random_control(&sys, time, 9, true);
    let text = signal_csv(&sig);
    assert!(text.starts_with(CSV_HEADER));
    let back = parse_signal_csv(&text, &ControlSignal::zeros(&sys, time)).unwrap();
    assert_eq!(back, sig);
    let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    assert!(parse_signal_csv(&truncated, &ControlSignal::zeros(&sys, time)).is_err());
}

#[test]
fn trajectory_csv_lists_one_based_components() {
    let sys = cascade2(Family::Hyperbolic, 10, 1, 1.0);
    let time = TimeGrid::new(0.05, 0.01).unwrap();
    let y0 = wave_modes(&sys, &[&[1.0], &[0.5]]);
    let out = solve(&sys, &y0, None, &time, &SolveOptions::snapshots(2)).unwrap();
    let csv = trajectory_csv(&out.snapshots);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let comps: std::collections::BTreeSet<&str> =
        lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert!(comps.contains("1") && comps.contains("2") && !comps.contains("0"));
}
