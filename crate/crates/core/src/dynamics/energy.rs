use serde::{Deserialize, Serialize};

use super::system::{CascadeSystem, SystemState};
use crate::error::Result;

/// Per-component energies at one time.
///
/// Hyperbolic: `e_1 = ½(|A^{1/2} w|² + |w'|²)`. Dissipative: `½|w|²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub per_component: Vec<f64>,
    pub total: f64,
}

pub fn energy(sys: &CascadeSystem, state: &SystemState) -> Result<EnergyReport> {
    state.check(sys)?;
    let grid = sys.grid();
    let per_component: Vec<f64> = match state {
        SystemState::Wave(s) => s
            .position
            .iter()
            .zip(&s.velocity)
            .map(|(w, v)| {
                // ⟨Aw, w⟩ equals the full-spectrum H_1 norm squared.
                let aw = sys.op().apply(w);
                0.5 * (grid.dot(&aw, w).max(0.0) + grid.dot(v, v))
            })
            .collect(),
        SystemState::Diffusion(s) => s
            .values
            .iter()
            .map(|w| 0.5 * grid.cell_volume() * w.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .collect(),
    };
    Ok(EnergyReport {
        t: state.t(),
        total: per_component.iter().sum(),
        per_component,
    })
}
