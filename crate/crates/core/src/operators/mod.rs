//! Discrete elliptic operator, its spectral basis, coupling and control
//! operators, and checks of the structural hypotheses.

mod coupling;
mod elliptic;
mod hypotheses;
mod spectral;

pub use coupling::{
    assemble_coupling, observe, AssembledCoupling, ControlAction, ControlKind, ControlSpec,
    CouplingEntry, CouplingSpec, End, Observation,
};
pub use elliptic::{assemble_operator, EllipticOperator};
pub use hypotheses::{verify_a1, verify_a4, CouplingBounds, HypothesisReport};
pub use spectral::{
    fractional_norm, spectral_basis, spectral_basis_with, FractionalNorm, SpectralBasis,
    SpectralOptions,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use proptest::prelude::*;

    #[test]
    fn stencil_entries_1d() {
        let op = assemble_operator(&build_grid(&[1.0], &[3]).unwrap());
        assert_eq!(op.entry(0, 0), 32.0);
        assert_eq!(op.entry(0, 1), -16.0);
        assert_eq!(op.entry(0, 2), 0.0);
    }

    #[test]
    fn tensor_sum_2d() {
        let op2 = assemble_operator(&build_grid(&[1.0, 1.0], &[4, 4]).unwrap());
        let op1 = assemble_operator(&build_grid(&[1.0], &[4]).unwrap());
        let l2 = spectral_basis(&op2, 1).unwrap().eigenvalue(0);
        let l1 = spectral_basis(&op1, 1).unwrap().eigenvalue(0);
        assert!((l2 - 2.0 * l1).abs() < 1e-10 * l2);
    }

    #[test]
    fn a1_in_2d() {
        let op = assemble_operator(&build_grid(&[1.0, 1.0], &[20, 20]).unwrap());
        let l1 = verify_a1(&spectral_basis(&op, 1).unwrap()).unwrap();
        let target = 2.0 * std::f64::consts::PI.powi(2);
        assert!((l1 - target).abs() < 0.02 * target);
    }

    #[test]
    fn boundary_observation_of_first_mode() {
        let g = build_grid(&[1.0], &[200]).unwrap();
        let op = assemble_operator(&g);
        let b = spectral_basis(&op, 1).unwrap();
        let spec = ControlSpec::new(vec![ControlKind::BoundaryEnd {
            end: End::Right,
            gain: 1.0,
        }]);
        let e1 = b.mode(0);
        let Observation::Scalar(v) = observe(&spec, 0, e1, &vec![0.0; 200], &g).unwrap() else {
            panic!("expected a scalar trace");
        };
        let exact = -std::f64::consts::PI * 2f64.sqrt();
        assert!((v - exact).abs() < 0.01 * exact.abs(), "{v} vs {exact}");
    }

    proptest! {
        #[test]
        fn laplacian_is_symmetric_and_positive(seed in 0u64..1000, two_d in any::<bool>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = if two_d {
                build_grid(&[1.0, 0.7], &[7, 9]).unwrap()
            } else {
                build_grid(&[2.0], &[31]).unwrap()
            };
            let op = assemble_operator(&g);
            let u: Vec<f64> = (0..g.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let w: Vec<f64> = (0..g.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let au = op.apply(&u);
            let aw = op.apply(&w);
            let lhs = g.dot(&au, &w);
            let rhs = g.dot(&u, &aw);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * g.norm(&au) * g.norm(&w));
            prop_assert!(g.dot(&au, &u) > 0.0);
        }

        #[test]
        fn multiplier_is_self_adjoint(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = build_grid(&[1.0], &[25]).unwrap();
            let r = crate::geometry::Region::interval(1.0, 0.2, 0.6, 2.5).unwrap();
            let c = crate::geometry::indicator_vector(&r, &g).unwrap().values;
            let u: Vec<f64> = (0..25).map(|_| rng.gen::<f64>()).collect();
            let w: Vec<f64> = (0..25).map(|_| rng.gen::<f64>()).collect();
            let cu: Vec<f64> = u.iter().zip(&c).map(|(a, b)| a * b).collect();
            let cw: Vec<f64> = w.iter().zip(&c).map(|(a, b)| a * b).collect();
            let (a, b) = (g.dot(&cu, &w), g.dot(&u, &cw));
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(b.abs()));
        }

        #[test]
        fn fractional_duality(seed in 0u64..1000, k in 1i32..3) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = build_grid(&[1.0], &[20]).unwrap();
            let b = spectral_basis(&assemble_operator(&g), 20).unwrap();
            let u: Vec<f64> = (0..20).map(|_| rng.gen::<f64>() - 0.5).collect();
            let w: Vec<f64> = (0..20).map(|_| rng.gen::<f64>() - 0.5).collect();
            let lhs = g.dot(&u, &w).abs();
            let rhs = b.fractional_norm(&u, k).value * b.fractional_norm(&w, -k).value;
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }
}
