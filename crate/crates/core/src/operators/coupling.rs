//! Cascade coupling patterns, control placement and the observation
//! operators attached to controls.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{indicator_vector, Grid, Region};
use crate::linalg::Scalar;

/// Equation `target` contains the term `c 1_O y_source` (0-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingEntry {
    pub target: usize,
    pub source: usize,
    pub region: Region,
}

/// Strictly triangular coupling pattern between `n_components` equations.
///
/// A forward pattern is strictly upper triangular (`target < source`), so
/// information flows from high to low index; its mirror is strictly lower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    n_components: usize,
    entries: Vec<CouplingEntry>,
    mirrored: bool,
}

impl CouplingSpec {
    pub fn new(n_components: usize, entries: Vec<CouplingEntry>) -> Result<Self> {
        if n_components == 0 {
            return invalid("a system needs at least one component");
        }
        for e in &entries {
            if e.source >= n_components || e.target >= n_components {
                return invalid(format!(
                    "coupling ({}, {}) refers to a missing component",
                    e.target, e.source
                ));
            }
            if e.target >= e.source {
                return invalid(format!(
                    "coupling ({}, {}) is not strictly upper triangular",
                    e.target, e.source
                ));
            }
            e.region.validate()?;
        }
        for (i, a) in entries.iter().enumerate() {
            if entries[..i]
                .iter()
                .any(|b| b.target == a.target && b.source == a.source)
            {
                return invalid(format!("duplicate coupling ({}, {})", a.target, a.source));
            }
        }
        Ok(Self {
            n_components,
            entries,
            mirrored: false,
        })
    }

    pub fn uncoupled(n_components: usize) -> Result<Self> {
        Self::new(n_components, Vec::new())
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn entries(&self) -> &[CouplingEntry] {
        &self.entries
    }

    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }

    /// Entry `(i, j)` becomes `(j, i)`; multipliers are self-adjoint.
    pub fn mirror(&self) -> CouplingSpec {
        CouplingSpec {
            n_components: self.n_components,
            entries: self
                .entries
                .iter()
                .map(|e| CouplingEntry {
                    target: e.source,
                    source: e.target,
                    region: e.region.clone(),
                })
                .collect(),
            mirrored: !self.mirrored,
        }
    }

    /// Same pattern with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<CouplingSpec> {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.region = e.region.scaled(factor)?;
        }
        Ok(out)
    }
}

/// Nodal multiplier fields of a coupling pattern on a grid.
#[derive(Debug, Clone)]
pub struct AssembledCoupling {
    pub target: usize,
    pub source: usize,
    pub field: Vec<f64>,
}

pub fn assemble_coupling(spec: &CouplingSpec, grid: &Grid) -> Result<Vec<AssembledCoupling>> {
    spec.entries
        .iter()
        .map(|e| {
            Ok(AssembledCoupling {
                target: e.target,
                source: e.source,
                field: indicator_vector(&e.region, grid)?.values,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    None,
    /// Locally distributed control `b v` with `b` the region amplitude.
    Distributed(Region),
    /// Dirichlet control `y = gain * v` at one end of a 1D interval.
    BoundaryEnd { end: End, gain: f64 },
}

impl ControlKind {
    pub fn is_control(&self) -> bool {
        !matches!(self, ControlKind::None)
    }
}

/// Control placement: components `0..p` are uncontrolled, `p..N` carry a
/// control each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub components: Vec<ControlKind>,
}

impl ControlSpec {
    pub fn new(components: Vec<ControlKind>) -> Self {
        Self { components }
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Number of leading uncontrolled components.
    pub fn p(&self) -> usize {
        self.components.iter().take_while(|c| !c.is_control()).count()
    }

    pub fn controlled(&self) -> Vec<usize> {
        (0..self.components.len())
            .filter(|k| self.components[*k].is_control())
            .collect()
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let p = self.p();
        if p == self.components.len() {
            return invalid("at least one component must carry a control");
        }
        if self.components[p..].iter().any(|c| !c.is_control()) {
            return invalid("controls must act on the trailing components p+1..N");
        }
        for c in &self.components {
            match c {
                ControlKind::None => {}
                ControlKind::Distributed(r) => {
                    r.validate()?;
                    if r.dim() != grid.dim() {
                        return invalid("control region dimension differs from the grid");
                    }
                }
                ControlKind::BoundaryEnd { gain, .. } => {
                    if grid.dim() != 1 {
                        return invalid("boundary controls are only supported in 1D");
                    }
                    if !(gain.is_finite() && *gain >= 0.0) {
                        return invalid("boundary gain must be finite and >= 0");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Control operator `B_k` of one component on a grid, with its adjoint.
///
/// Distributed: `B v = b v` and `B* w = b w` (nodal fields).
/// Boundary: the Dirichlet value `gain * v` is lifted into the stencil row of
/// the adjacent interior node, `B v = gain v / h² δ_end`, whose adjoint in the
/// discrete L2 product is `B* w = gain w_end / h`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlAction {
    Distributed { b: Vec<f64> },
    Boundary { node: usize, gain: f64, h: f64 },
}

impl ControlAction {
    pub fn new(kind: &ControlKind, grid: &Grid) -> Result<Option<Self>> {
        Ok(match kind {
            ControlKind::None => None,
            ControlKind::Distributed(r) => Some(ControlAction::Distributed {
                b: indicator_vector(r, grid)?.values,
            }),
            ControlKind::BoundaryEnd { end, gain } => {
                if grid.dim() != 1 {
                    return invalid("boundary controls are only supported in 1D");
                }
                let node = match end {
                    End::Left => 0,
                    End::Right => grid.len() - 1,
                };
                Some(ControlAction::Boundary {
                    node,
                    gain: *gain,
                    h: grid.h()[0],
                })
            }
        })
    }

    /// Number of values per time sample (nodes or 1).
    pub fn width(&self, grid: &Grid) -> usize {
        match self {
            ControlAction::Distributed { .. } => grid.len(),
            ControlAction::Boundary { .. } => 1,
        }
    }

    /// `out += B v`.
    pub fn add_forcing<T: Scalar>(&self, v: &[T], out: &mut [T]) {
        match self {
            ControlAction::Distributed { b } => {
                for ((o, bi), vi) in out.iter_mut().zip(b).zip(v) {
                    if *bi != 0.0 {
                        *o += *vi * *bi;
                    }
                }
            }
            ControlAction::Boundary { node, gain, h } => {
                out[*node] += v[0] * (*gain / (h * h));
            }
        }
    }

    /// `B* w`.
    pub fn adjoint<T: Scalar>(&self, w: &[T]) -> Vec<T> {
        match self {
            ControlAction::Distributed { b } => {
                w.iter().zip(b).map(|(wi, bi)| *wi * *bi).collect()
            }
            ControlAction::Boundary { node, gain, h } => vec![w[*node] * (*gain / h)],
        }
    }
}

/// Value of an observation: a nodal field or a scalar trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation<T> {
    Field(Vec<T>),
    Scalar(T),
}

/// Observation attached to the control of component `k` for the state pair
/// `(w, w')`: `b w'` for a distributed control (acts on the velocity) and
/// the outward discrete normal derivative `-gain w_end / h` for a boundary
/// control (acts on the position).
pub fn observe<T: Scalar>(
    spec: &ControlSpec,
    k: usize,
    w: &[T],
    w_prime: &[T],
    grid: &Grid,
) -> Result<Observation<T>> {
    let kind = match spec.components.get(k) {
        Some(kind) if kind.is_control() => kind,
        _ => return invalid(format!("component {k} carries no control")),
    };
    match ControlAction::new(kind, grid)?.expect("controlled") {
        a @ ControlAction::Distributed { .. } => Ok(Observation::Field(a.adjoint(w_prime))),
        a @ ControlAction::Boundary { .. } => {
            let v = a.adjoint(w)[0];
            Ok(Observation::Scalar(v * -1.0))
        }
    }
}
