use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::Grid;
use crate::linalg::Scalar;
use crate::operators::{
    assemble_coupling, AssembledCoupling, ControlAction, ControlSpec, CouplingSpec,
    EllipticOperator, SpectralBasis,
};

/// Evolution family of every component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `y'' + A y + couplings = B v`.
    Hyperbolic,
    /// `e^{iθ} y' + A y + couplings = B v`, `θ ∈ [-π/2, π/2]`.
    Dissipative { theta: f64 },
}

impl Family {
    pub fn is_hyperbolic(&self) -> bool {
        matches!(self, Family::Hyperbolic)
    }

    /// `e^{-iθ}`, the factor in front of the right-hand side of `y' = ...`.
    pub fn rotation(&self) -> Complex64 {
        match self {
            Family::Hyperbolic => Complex64::new(1.0, 0.0),
            Family::Dissipative { theta } => {
                // Exact values at the endpoints keep the Schrödinger step unitary.
                if self.is_endpoint_angle() {
                    Complex64::new(0.0, -theta.signum())
                } else if *theta == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::from_polar(1.0, -theta)
                }
            }
        }
    }

    /// `θ` on the closed endpoints `±π/2` (Schrödinger case), which lies
    /// outside the open range covered by the parabolic-type results.
    pub fn is_endpoint_angle(&self) -> bool {
        match self {
            Family::Hyperbolic => false,
            Family::Dissipative { theta } => {
                (theta.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-12
            }
        }
    }
}

/// Discretized cascade system of `N` components.
#[derive(Debug, Clone)]
pub struct CascadeSystem {
    family: Family,
    op: EllipticOperator,
    basis: SpectralBasis,
    coupling: CouplingSpec,
    control: ControlSpec,
    transposed: bool,
    coupling_fields: Vec<AssembledCoupling>,
    actions: Vec<Option<ControlAction>>,
}

impl CascadeSystem {
    pub fn new(
        family: Family,
        op: EllipticOperator,
        basis: SpectralBasis,
        coupling: CouplingSpec,
        control: ControlSpec,
    ) -> Result<Self> {
        if let Family::Dissipative { theta } = family {
            if !(theta.abs() <= std::f64::consts::FRAC_PI_2 + 1e-15) {
                return invalid(format!("θ = {theta} lies outside [-π/2, π/2]"));
            }
        }
        if coupling.n_components() != control.n_components() {
            return invalid("coupling and control describe different component counts");
        }
        if coupling.is_mirrored() {
            return invalid("forward systems need an upper triangular coupling");
        }
        if basis.grid() != op.grid() {
            return invalid("basis and operator live on different grids");
        }
        control.validate(op.grid())?;
        Self::assemble(family, op, basis, coupling, control, false)
    }

    fn assemble(
        family: Family,
        op: EllipticOperator,
        basis: SpectralBasis,
        coupling: CouplingSpec,
        control: ControlSpec,
        transposed: bool,
    ) -> Result<Self> {
        let coupling_fields = assemble_coupling(&coupling, op.grid())?;
        let actions = control
            .components
            .iter()
            .map(|k| ControlAction::new(k, op.grid()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family,
            op,
            basis,
            coupling,
            control,
            transposed,
            coupling_fields,
            actions,
        })
    }

    /// Mirrored coupling, controls reinterpreted as observations.
    pub(crate) fn mirrored(&self) -> Result<Self> {
        Self::assemble(
            self.family,
            self.op.clone(),
            self.basis.clone(),
            self.coupling.mirror(),
            self.control.clone(),
            !self.transposed,
        )
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn op(&self) -> &EllipticOperator {
        &self.op
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    pub fn coupling(&self) -> &CouplingSpec {
        &self.coupling
    }

    pub fn control(&self) -> &ControlSpec {
        &self.control
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    pub fn n_components(&self) -> usize {
        self.control.n_components()
    }

    /// Number of uncontrolled leading components.
    pub fn p(&self) -> usize {
        self.control.p()
    }

    pub fn controlled(&self) -> Vec<usize> {
        self.control.controlled()
    }

    pub(crate) fn actions(&self) -> &[Option<ControlAction>] {
        &self.actions
    }

    pub(crate) fn coupling_fields(&self) -> &[AssembledCoupling] {
        &self.coupling_fields
    }

    /// `out_i += Σ_j c_ij 1_O y_j` over the coupling entries targeting `i`.
    pub(crate) fn add_coupling<T: Scalar>(&self, y: &[Vec<T>], out: &mut [Vec<T>]) {
        for c in &self.coupling_fields {
            let (src, dst) = (&y[c.source], &mut out[c.target]);
            for ((o, f), s) in dst.iter_mut().zip(&c.field).zip(src) {
                *o += *s * *f;
            }
        }
    }

    /// `out = M y` with `M = diag(A) + coupling`.
    pub(crate) fn apply_m<T: Scalar>(&self, y: &[Vec<T>], out: &mut [Vec<T>]) {
        for (yi, oi) in y.iter().zip(out.iter_mut()) {
            self.op.apply_into(yi, oi);
        }
        self.add_coupling(y, out);
    }

    /// Component order in which every coupling source precedes its target.
    pub(crate) fn solve_order(&self) -> Vec<usize> {
        let n = self.n_components();
        if self.coupling.is_mirrored() {
            (0..n).collect()
        } else {
            (0..n).rev().collect()
        }
    }

    /// Copy of this system with every coupling amplitude scaled.
    pub fn with_coupling_scale(&self, factor: f64) -> Result<Self> {
        Self::assemble(
            self.family,
            self.op.clone(),
            self.basis.clone(),
            self.coupling.scaled(factor)?,
            self.control.clone(),
            self.transposed,
        )
    }
}

/// Uniform time grid `t_m = m dt`, `m = 0..=steps`, with trapezoidal weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Uses the largest step `<= dt` that divides `horizon` evenly.
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid("horizon T must be positive");
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid("dt must be positive");
        }
        let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            dt: horizon / steps as f64,
            steps,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn samples(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }

    pub fn weight(&self, m: usize) -> f64 {
        if m == 0 || m == self.steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    pub fn is_compatible(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}

/// Position and velocity of every component of a hyperbolic system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub t: f64,
    pub position: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
}

impl WaveState {
    pub fn zeros(n_components: usize, nodes: usize) -> Self {
        Self {
            t: 0.0,
            position: vec![vec![0.0; nodes]; n_components],
            velocity: vec![vec![0.0; nodes]; n_components],
        }
    }
}

/// Complex state of every component of a dissipative system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionState {
    pub t: f64,
    pub values: Vec<Vec<Complex64>>,
}

impl DiffusionState {
    pub fn zeros(n_components: usize, nodes: usize) -> Self {
        Self {
            t: 0.0,
            values: vec![vec![Complex64::new(0.0, 0.0); nodes]; n_components],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SystemState {
    Wave(WaveState),
    Diffusion(DiffusionState),
}

impl SystemState {
    pub fn zeros(sys: &CascadeSystem) -> Self {
        let (n, nodes) = (sys.n_components(), sys.grid().len());
        match sys.family() {
            Family::Hyperbolic => SystemState::Wave(WaveState::zeros(n, nodes)),
            Family::Dissipative { .. } => SystemState::Diffusion(DiffusionState::zeros(n, nodes)),
        }
    }

    pub fn t(&self) -> f64 {
        match self {
            SystemState::Wave(s) => s.t,
            SystemState::Diffusion(s) => s.t,
        }
    }

    pub fn check(&self, sys: &CascadeSystem) -> Result<()> {
        let (n, nodes) = (sys.n_components(), sys.grid().len());
        let ok = match (self, sys.family()) {
            (SystemState::Wave(s), Family::Hyperbolic) => {
                s.position.len() == n
                    && s.velocity.len() == n
                    && s.position.iter().chain(&s.velocity).all(|f| f.len() == nodes)
            }
            (SystemState::Diffusion(s), Family::Dissipative { .. }) => {
                s.values.len() == n && s.values.iter().all(|f| f.len() == nodes)
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            invalid("state does not match the system (family, components or grid)")
        }
    }
}

/// Time samples of one controlled component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlChannel {
    pub component: usize,
    /// Values per sample: the node count for distributed controls, 1 for
    /// boundary controls.
    pub width: usize,
    /// Weight of the spatial inner product (`h^d` for fields, 1 for traces).
    pub weight: f64,
    /// Row-major `samples x width`.
    pub values: Vec<Complex64>,
}

impl ControlChannel {
    pub fn sample(&self, m: usize) -> &[Complex64] {
        &self.values[m * self.width..(m + 1) * self.width]
    }

    pub fn sample_mut(&mut self, m: usize) -> &mut [Complex64] {
        &mut self.values[m * self.width..(m + 1) * self.width]
    }
}

/// Sampled control `v_k(t_m)` for every controlled component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub time: TimeGrid,
    pub channels: Vec<ControlChannel>,
}

impl ControlSignal {
    pub fn zeros(sys: &CascadeSystem, time: TimeGrid) -> Self {
        let grid = sys.grid();
        let channels = sys
            .actions()
            .iter()
            .enumerate()
            .filter_map(|(k, a)| a.as_ref().map(|a| (k, a)))
            .map(|(k, a)| {
                let width = a.width(grid);
                ControlChannel {
                    component: k,
                    width,
                    weight: if width == 1 { 1.0 } else { grid.cell_volume() },
                    values: vec![Complex64::new(0.0, 0.0); width * time.samples()],
                }
            })
            .collect();
        Self { time, channels }
    }

    pub fn check(&self, sys: &CascadeSystem, time: &TimeGrid) -> Result<()> {
        if !self.time.is_compatible(time) {
            return invalid(format!(
                "control grid ({} steps of {}) does not match the solver grid ({} steps of {})",
                self.time.steps, self.time.dt, time.steps, time.dt
            ));
        }
        let expected = ControlSignal::zeros(sys, *time);
        let same_layout = self.channels.len() == expected.channels.len()
            && self.channels.iter().zip(&expected.channels).all(|(a, b)| {
                a.component == b.component && a.width == b.width && a.values.len() == b.values.len()
            });
        if !same_layout {
            return invalid("control channels do not match the controlled components");
        }
        if self
            .channels
            .iter()
            .flat_map(|c| &c.values)
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return invalid("control contains non-finite values");
        }
        Ok(())
    }

    /// `Re ∫ Σ_k ⟨v_k, w_k⟩ dt` with trapezoidal weights.
    pub fn inner(&self, other: &ControlSignal) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.channels.iter().zip(&other.channels) {
            for m in 0..self.time.samples() {
                let w = self.time.weight(m) * a.weight;
                let d: f64 = a
                    .sample(m)
                    .iter()
                    .zip(b.sample(m))
                    .map(|(x, y)| (x * y.conj()).re)
                    .sum();
                s += w * d;
            }
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.channels {
            c.values.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_real(&self) -> bool {
        self.channels.iter().flat_map(|c| &c.values).all(|v| v.im == 0.0)
    }
}

/// Forcing `Σ_k B_k v_k(t_m)` added into `out`.
pub(crate) fn add_control_forcing<T: Scalar>(
    sys: &CascadeSystem,
    control: Option<&ControlSignal>,
    m: usize,
    lift: impl Fn(Complex64) -> T,
    out: &mut [Vec<T>],
) {
    let Some(control) = control else { return };
    for ch in &control.channels {
        if let Some(action) = &sys.actions()[ch.component] {
            let v: Vec<T> = ch.sample(m).iter().map(|z| lift(*z)).collect();
            action.add_forcing(&v, &mut out[ch.component]);
        }
    }
}
