//! Forward and adjoint time integration of cascade systems.
//!
//! The hyperbolic family uses explicit leapfrog, the dissipative family
//! Crank–Nicolson. Adjoint solves run the same schemes on the transposed
//! cascade, so the discrete duality pairing holds to round-off.

mod csv;
mod energy;
mod integrate;
mod system;

pub use csv::{parse_signal_csv, signal_csv, trajectory_csv, CSV_HEADER};
pub use energy::{energy, EnergyReport};
pub use integrate::{
    derivative_seed, max_stable_dt, solve, solve_adjoint, solve_dissipative, solve_hyperbolic,
    AdjointSolution, SolveOptions, Solution,
};
pub use system::{
    CascadeSystem, ControlChannel, ControlSignal, DiffusionState, Family, SystemState, TimeGrid,
    WaveState,
};
