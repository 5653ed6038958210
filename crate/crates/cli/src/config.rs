//! JSON experiment configuration. Components are 1-based here and 0-based
//! in the core library.

use std::path::PathBuf;

use cascade_core::dynamics::{
    max_stable_dt, CascadeSystem, DiffusionState, Family, SystemState, TimeGrid, WaveState,
};
use cascade_core::geometry::{build_grid, gcc_time, BoxPart, Region};
use cascade_core::operators::{
    assemble_operator, spectral_basis, ControlKind, ControlSpec, CouplingEntry, CouplingSpec, End,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub extents: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    /// Equation receiving the term.
    pub target: usize,
    /// Component the term is taken from.
    pub source: usize,
    pub boxes: Vec<BoxConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlConfig {
    Distributed { component: usize, boxes: Vec<BoxConfig> },
    Boundary { component: usize, end: End, #[serde(default = "one")] gain: f64 },
}

impl ControlConfig {
    fn component(&self) -> usize {
        match self {
            ControlConfig::Distributed { component, .. } | ControlConfig::Boundary { component, .. } => {
                *component
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInit {
    /// Energy norm `√(2 e)` of the component after scaling.
    pub norm: f64,
    pub seed: u64,
    #[serde(default = "default_random_modes")]
    pub modes: usize,
}

fn default_random_modes() -> usize {
    5
}

/// Initial data of one component: mode coefficients (1-based mode index)
/// or a seeded random combination of the first modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub component: usize,
    #[serde(default)]
    pub modes: Vec<(usize, f64)>,
    #[serde(default)]
    pub velocity_modes: Vec<(usize, f64)>,
    #[serde(default)]
    pub random: Option<RandomInit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GccConfig {
    #[serde(default = "default_rays")]
    pub n_rays: usize,
    #[serde(default = "default_dt_ray")]
    pub dt_ray: f64,
    /// Horizon of the `gcc` subcommand; defaults to `T`.
    #[serde(default)]
    pub horizon: Option<f64>,
}

fn default_rays() -> usize {
    400
}

fn default_dt_ray() -> f64 {
    1e-3
}

impl Default for GccConfig {
    fn default() -> Self {
        Self {
            n_rays: default_rays(),
            dt_ray: default_dt_ray(),
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default = "default_a4_samples")]
    pub a4_samples: usize,
    #[serde(default = "default_a2_samples")]
    pub a2_samples: usize,
    #[serde(default = "default_levels")]
    pub a2_levels: Vec<usize>,
    #[serde(default = "one")]
    pub a2_horizon: f64,
}

fn default_a4_samples() -> usize {
    100
}

fn default_a2_samples() -> usize {
    3
}

fn default_levels() -> Vec<usize> {
    vec![50, 100, 200]
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            a4_samples: default_a4_samples(),
            a2_samples: default_a2_samples(),
            a2_levels: default_levels(),
            a2_horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationChoice {
    /// `B^*` of the last controlled component.
    Control,
    /// Unit indicator of the first coupling region.
    Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservabilityConfig {
    #[serde(default = "default_which")]
    pub which: Vec<ObservationChoice>,
    /// Horizons to scan; defaults to `[T]`.
    #[serde(default)]
    pub horizons: Vec<f64>,
    #[serde(default = "default_seed_limit")]
    pub seed_limit: usize,
}

fn default_which() -> Vec<ObservationChoice> {
    vec![ObservationChoice::Control]
}

fn default_seed_limit() -> usize {
    cascade_core::hum::DENSE_SEED_LIMIT
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        Self {
            which: default_which(),
            horizons: Vec::new(),
            seed_limit: default_seed_limit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    #[serde(default = "default_slope_band")]
    pub slope_band: (f64, f64),
}

fn default_slope_band() -> (f64, f64) {
    (0.35, 0.65)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub family: Family,
    pub components: usize,
    /// Number of uncontrolled leading components; checked against controls.
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub couplings: Vec<CouplingConfig>,
    pub controls: Vec<ControlConfig>,
    #[serde(default, rename = "T")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub k_filter: Option<usize>,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub initial: Vec<InitialConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gcc: GccConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub observability: ObservabilityConfig,
    #[serde(default)]
    pub kalman_modes: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_cg_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    2000
}

/// Parsed configuration with its canonical hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub raw: serde_json::Value,
    pub hash: String,
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, CliError> {
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?;
    let config: ExperimentConfig = serde_json::from_value(raw.clone())
        .map_err(|e| CliError::Config(format!("schema violation: {e}")))?;
    config.validate()?;
    Ok(LoadedConfig {
        hash: config_hash(&raw),
        config,
        raw,
    })
}

/// SHA-256 of the JSON with object keys in sorted order.
pub fn config_hash(raw: &serde_json::Value) -> String {
    // serde_json maps are ordered by key, so serialization is canonical.
    let canonical = serde_json::to_string(raw).expect("values serialize");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

fn region(extents: &[f64], boxes: &[BoxConfig]) -> Result<Region, CliError> {
    let parts = boxes
        .iter()
        .map(|b| BoxPart::new(b.lo.clone(), b.hi.clone(), b.amplitude))
        .collect();
    Ok(Region::new(extents, parts)?)
}

/// Resolved time grid and filter size.
#[derive(Debug, Clone, Copy)]
pub struct Resolved {
    pub time: TimeGrid,
    pub k_filter: usize,
    pub horizon_defaulted: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.domain;
        if d.extents.is_empty() || d.extents.len() > 2 || d.extents.len() != d.n.len() {
            return cfg_err("domain needs 1 or 2 extents with matching node counts");
        }
        let n = self.components;
        if n == 0 {
            return cfg_err("components must be at least 1");
        }
        for c in &self.couplings {
            if !(1..=n).contains(&c.target) || !(1..=n).contains(&c.source) {
                return cfg_err(format!(
                    "coupling ({}, {}) refers to a component outside 1..={n}",
                    c.target, c.source
                ));
            }
        }
        let mut seen = vec![false; n];
        for c in &self.controls {
            let k = c.component();
            if !(1..=n).contains(&k) {
                return cfg_err(format!("control on component {k} outside 1..={n}"));
            }
            if std::mem::replace(&mut seen[k - 1], true) {
                return cfg_err(format!("component {k} has two controls"));
            }
        }
        for i in &self.initial {
            if !(1..=n).contains(&i.component) {
                return cfg_err(format!("initial data for component {} outside 1..={n}", i.component));
            }
            if i.random.is_some() && !(i.modes.is_empty() && i.velocity_modes.is_empty()) {
                return cfg_err("initial data mixes explicit modes with random data");
            }
            if let Some(r) = &i.random {
                if !(r.norm >= 0.0 && r.norm.is_finite()) || r.modes == 0 {
                    return cfg_err("random initial data needs norm >= 0 and modes >= 1");
                }
            }
            if i.modes.iter().chain(&i.velocity_modes).any(|(k, _)| *k == 0) {
                return cfg_err("mode indices are 1-based");
            }
        }
        let positive = [
            ("cg_tol", Some(self.cg_tol)),
            ("T", self.horizon),
            ("dt", self.dt),
            ("gcc.dt_ray", Some(self.gcc.dt_ray)),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return cfg_err(format!("{name} must be positive"));
                }
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return cfg_err("epsilon must be >= 0");
        }
        if self.max_iter == 0 {
            return cfg_err("max_iter must be at least 1");
        }
        if self.k_filter == Some(0) {
            return cfg_err("k_filter must be at least 1");
        }
        Ok(())
    }

    pub fn control_spec(&self) -> Result<ControlSpec, CliError> {
        let mut kinds = vec![ControlKind::None; self.components];
        for c in &self.controls {
            kinds[c.component() - 1] = match c {
                ControlConfig::Distributed { boxes, .. } => {
                    ControlKind::Distributed(region(&self.domain.extents, boxes)?)
                }
                ControlConfig::Boundary { end, gain, .. } => ControlKind::BoundaryEnd {
                    end: *end,
                    gain: *gain,
                },
            };
        }
        let spec = ControlSpec::new(kinds);
        if let Some(p) = self.p {
            if p != spec.p() {
                return cfg_err(format!(
                    "p = {p} but controls leave {} leading components free",
                    spec.p()
                ));
            }
        }
        Ok(spec)
    }

    pub fn coupling_spec(&self) -> Result<CouplingSpec, CliError> {
        let entries = self
            .couplings
            .iter()
            .map(|c| {
                Ok(CouplingEntry {
                    target: c.target - 1,
                    source: c.source - 1,
                    region: region(&self.domain.extents, &c.boxes)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(CouplingSpec::new(self.components, entries)?)
    }

    pub fn coupling_regions(&self) -> Result<Vec<(String, Region)>, CliError> {
        self.couplings
            .iter()
            .map(|c| {
                Ok((
                    format!("coupling ({}, {})", c.target, c.source),
                    region(&self.domain.extents, &c.boxes)?,
                ))
            })
            .collect()
    }

    pub fn control_regions(&self) -> Result<Vec<(String, Region)>, CliError> {
        self.controls
            .iter()
            .filter_map(|c| match c {
                ControlConfig::Distributed { component, boxes } => Some(
                    region(&self.domain.extents, boxes)
                        .map(|r| (format!("control on component {component}"), r)),
                ),
                ControlConfig::Boundary { .. } => None,
            })
            .collect()
    }

    /// Number of modes the spectral basis must carry.
    pub fn basis_modes(&self) -> usize {
        let nodes: usize = self.domain.n.iter().product();
        let k = self.k_filter.unwrap_or(20.min(nodes));
        let random = self
            .initial
            .iter()
            .filter_map(|i| i.random.as_ref().map(|r| r.modes))
            .max()
            .unwrap_or(0);
        let explicit = self
            .initial
            .iter()
            .flat_map(|i| i.modes.iter().chain(&i.velocity_modes).map(|(k, _)| *k))
            .max()
            .unwrap_or(0);
        k.max(random)
            .max(explicit)
            .max(self.kalman_modes.unwrap_or(0))
            .clamp(1, nodes)
    }

    pub fn build_system(&self) -> Result<CascadeSystem, CliError> {
        let grid = build_grid(&self.domain.extents, &self.domain.n)?;
        let op = assemble_operator(&grid);
        let basis = spectral_basis(&op, self.basis_modes())?;
        Ok(CascadeSystem::new(
            self.family,
            op,
            basis,
            self.coupling_spec()?,
            self.control_spec()?,
        )?)
    }

    /// 1.5 x the sum of the GCC times of the control and coupling regions.
    pub fn default_horizon(&self) -> Result<f64, CliError> {
        let mut regions = self.control_regions()?;
        regions.extend(self.coupling_regions()?);
        if regions.is_empty() {
            return cfg_err("T is required when no region defines a GCC time");
        }
        let mut total = 0.0;
        for (name, r) in regions {
            match gcc_time(&r, self.gcc.n_rays, self.gcc.dt_ray)? {
                Some(t) => total += t,
                None => {
                    return cfg_err(format!(
                        "{name} fails the geometric control condition; set T explicitly"
                    ))
                }
            }
        }
        Ok(1.5 * total)
    }

    pub fn resolve(&self, sys: &CascadeSystem) -> Result<Resolved, CliError> {
        let (horizon, horizon_defaulted) = match self.horizon {
            Some(t) => (t, false),
            None => (self.default_horizon()?, true),
        };
        let dt = match (self.dt, sys.family()) {
            (Some(dt), _) => dt,
            (None, Family::Hyperbolic) => 0.5 * max_stable_dt(sys),
            (None, Family::Dissipative { .. }) => horizon / 1000.0,
        };
        let k_filter = self
            .k_filter
            .unwrap_or(20.min(sys.grid().len()))
            .min(sys.basis().len());
        Ok(Resolved {
            time: TimeGrid::new(horizon, dt)?,
            k_filter,
            horizon_defaulted,
        })
    }

    pub fn initial_state(&self, sys: &CascadeSystem) -> Result<SystemState, CliError> {
        let basis = sys.basis();
        let kmax = basis.len();
        let mut state = SystemState::zeros(sys);
        for init in &self.initial {
            let mut pos = vec![0.0; kmax];
            let mut vel = vec![0.0; kmax];
            for (list, out) in [(&init.modes, &mut pos), (&init.velocity_modes, &mut vel)] {
                for (k, c) in list {
                    if *k > kmax {
                        return cfg_err(format!("mode {k} exceeds the {kmax} computed modes"));
                    }
                    out[k - 1] += c;
                }
            }
            if let Some(r) = &init.random {
                let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
                let m = r.modes.min(kmax);
                for j in 0..m {
                    pos[j] = rng.gen::<f64>() * 2.0 - 1.0;
                    if sys.family().is_hyperbolic() {
                        vel[j] = rng.gen::<f64>() * 2.0 - 1.0;
                    }
                }
                let norm_sq: f64 = (0..kmax)
                    .map(|j| {
                        if sys.family().is_hyperbolic() {
                            basis.eigenvalue(j) * pos[j] * pos[j] + vel[j] * vel[j]
                        } else {
                            pos[j] * pos[j]
                        }
                    })
                    .sum();
                let scale = if norm_sq > 0.0 { r.norm / norm_sq.sqrt() } else { 0.0 };
                pos.iter_mut().chain(vel.iter_mut()).for_each(|x| *x *= scale);
            }
            let i = init.component - 1;
            match &mut state {
                SystemState::Wave(WaveState {
                    position, velocity, ..
                }) => {
                    position[i] = basis.synthesize(&pos);
                    velocity[i] = basis.synthesize(&vel);
                }
                SystemState::Diffusion(DiffusionState { values, .. }) => {
                    if init.velocity_modes.iter().any(|(_, c)| *c != 0.0) {
                        return cfg_err("velocity modes only apply to the hyperbolic family");
                    }
                    values[i] = basis
                        .synthesize(&pos)
                        .into_iter()
                        .map(|x| Complex64::new(x, 0.0))
                        .collect();
                }
            }
        }
        Ok(state)
    }
}
