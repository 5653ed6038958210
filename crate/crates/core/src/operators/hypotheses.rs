//! Numeric certification of the coercivity of `A` and of the coupling
//! bounds for multiplier couplings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spectral::SpectralBasis;
use crate::error::{Error, Result};
use crate::geometry::{indicator_vector, Region};

/// Returns the coercivity constant `λ_1` of `A`.
pub fn verify_a1(basis: &SpectralBasis) -> Result<f64> {
    let l1 = basis.eigenvalue(0);
    if !(l1 > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "smallest eigenvalue {l1} is not positive"
        )));
    }
    Ok(l1)
}

/// Coupling bounds for the multiplier `C w = c 1_O w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingBounds {
    /// `|Cw|² <= beta ⟨Cw, w⟩`; equals the largest amplitude.
    pub beta: f64,
    /// `alpha |Π w|² <= ⟨Cw, w⟩` with `Π` the indicator of `O`.
    pub alpha: f64,
    pub pi_support: Region,
    /// Smallest relative slack of each inequality over the random samples.
    pub min_slack_beta: f64,
    pub min_slack_alpha: f64,
    pub n_samples: usize,
}

impl CouplingBounds {
    /// Both inequalities held on every sample (up to round-off) and `alpha > 0`.
    pub fn holds(&self) -> bool {
        self.alpha > 0.0 && self.min_slack_beta >= -1e-12 && self.min_slack_alpha >= -1e-12
    }
}

pub fn verify_a4(
    region: &Region,
    basis: &SpectralBasis,
    n_samples: usize,
    seed: u64,
) -> Result<CouplingBounds> {
    if let Some(p) = region.parts.iter().find(|p| !(p.amplitude >= 0.0)) {
        return Err(Error::HypothesisViolated(format!(
            "coupling amplitude {} is negative",
            p.amplitude
        )));
    }
    let grid = basis.grid();
    let c = indicator_vector(region, grid)?.values;
    let pi: Vec<f64> = (0..grid.len())
        .map(|i| {
            if region.contains(&grid.node(i)[..grid.dim()]) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let beta = region.max_amplitude();
    let alpha = region.min_amplitude();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_slack_beta = f64::INFINITY;
    let mut min_slack_alpha = f64::INFINITY;
    for _ in 0..n_samples {
        let w: Vec<f64> = (0..grid.len()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let cw: Vec<f64> = w.iter().zip(&c).map(|(a, b)| a * b).collect();
        let piw: Vec<f64> = w.iter().zip(&pi).map(|(a, b)| a * b).collect();
        let cww = grid.dot(&cw, &w);
        let cw2 = grid.dot(&cw, &cw);
        let piw2 = grid.dot(&piw, &piw);
        let scale = grid.dot(&w, &w) * beta.max(1.0) * beta.max(1.0);
        min_slack_beta = min_slack_beta.min((beta * cww - cw2) / scale);
        min_slack_alpha = min_slack_alpha.min((cww - alpha * piw2) / scale);
    }
    Ok(CouplingBounds {
        beta,
        alpha,
        pi_support: region.clone(),
        min_slack_beta,
        min_slack_alpha,
        n_samples,
    })
}

/// Collected verdicts on the structural hypotheses of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub omega_a1: f64,
    /// Per coupling entry `(target, source)` (0-based).
    pub couplings: Vec<((usize, usize), CouplingBounds)>,
    /// Largest and smallest bounds over all entries.
    pub beta: f64,
    pub alpha: f64,
    pub pi_support: Option<Region>,
    /// Largest admissibility ratio per refinement level.
    pub a2_ratio_samples: Vec<f64>,
    pub a1_holds: bool,
    pub a4_holds: bool,
    pub a2_bounded: bool,
    /// Coupling bounds are only certified in H; the H_1/H_2 boundedness of
    /// indicator multipliers is not checked.
    pub a4_checked_spaces: Vec<i32>,
}

impl HypothesisReport {
    pub fn pass(&self) -> bool {
        self.a1_holds && self.a4_holds && self.a2_bounded
    }
}
