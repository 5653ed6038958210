//! Grids on intervals and rectangles, box-union regions, and a billiard-ray
//! checker for the Geometric Control Condition.
//!
//! Rays travel at unit speed and reflect specularly on the walls of the
//! rectangle. Positions are computed in closed form by folding the free
//! straight-line motion back into the box, so reflections introduce no
//! stepping error; only the hit test samples at `dt_ray`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform interior grid on `[0, L_1] x ... x [0, L_d]`, `d` in {1, 2}.
///
/// Nodes are stored with the first axis varying fastest. Boundary nodes are
/// not stored (homogeneous Dirichlet data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    extents: Vec<f64>,
    n: Vec<usize>,
    h: Vec<f64>,
}

impl Grid {
    pub fn new(extents: &[f64], n: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return invalid(format!("grid dimension must be 1 or 2, got {}", extents.len()));
        }
        if extents.len() != n.len() {
            return invalid("extents and node counts have different lengths");
        }
        if let Some(l) = extents.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return invalid(format!("extent {l} must be positive"));
        }
        if let Some(k) = n.iter().find(|k| **k < 2) {
            return invalid(format!("interior node count {k} must be at least 2"));
        }
        let h = extents
            .iter()
            .zip(n)
            .map(|(l, k)| l / (*k as f64 + 1.0))
            .collect();
        Ok(Self {
            extents: extents.to_vec(),
            n: n.to_vec(),
            h,
        })
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Total number of interior nodes.
    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weight `h_1 * ... * h_d` of the discrete L2 inner product.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Coordinates of the node with flat index `idx`.
    pub fn node(&self, idx: usize) -> [f64; 2] {
        let ix = idx % self.n[0];
        let x = (ix as f64 + 1.0) * self.h[0];
        if self.dim() == 1 {
            [x, 0.0]
        } else {
            let iy = idx / self.n[0];
            [x, (iy as f64 + 1.0) * self.h[1]]
        }
    }

    /// Discrete L2 inner product `h^d sum u w`.
    pub fn dot(&self, u: &[f64], w: &[f64]) -> f64 {
        self.cell_volume() * u.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.dot(u, u).sqrt()
    }
}

/// Builds the interior grid; see [`Grid::new`].
pub fn build_grid(extents: &[f64], n: &[usize]) -> Result<Grid> {
    Grid::new(extents, n)
}

/// An open axis-aligned box with a constant nonnegative amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPart {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub amplitude: f64,
}

impl BoxPart {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, amplitude: f64) -> Self {
        Self { lo, hi, amplitude }
    }

    pub fn interval(a: f64, b: f64, amplitude: f64) -> Self {
        Self::new(vec![a], vec![b], amplitude)
    }

    fn contains(&self, p: &[f64]) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(p)
            .all(|((lo, hi), x)| *lo < *x && *x < *hi)
    }

    fn min_width(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(lo, hi)| hi - lo)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Union of open boxes clipped to the domain `[0, L_1] x ... x [0, L_d]`.
///
/// Where parts overlap the amplitude is the largest one among them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub extents: Vec<f64>,
    pub parts: Vec<BoxPart>,
}

impl Region {
    pub fn new(extents: &[f64], parts: Vec<BoxPart>) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return invalid("region dimension must be 1 or 2");
        }
        if parts.is_empty() {
            return invalid("region has no parts");
        }
        let mut clipped = Vec::with_capacity(parts.len());
        for part in parts {
            if part.lo.len() != extents.len() || part.hi.len() != extents.len() {
                return invalid("box dimension does not match the domain");
            }
            if !part.amplitude.is_finite() || part.amplitude < 0.0 {
                return invalid(format!("amplitude {} must be finite and >= 0", part.amplitude));
            }
            let lo: Vec<f64> = part.lo.iter().map(|v| v.max(0.0)).collect();
            let hi: Vec<f64> = part
                .hi
                .iter()
                .zip(extents)
                .map(|(v, l)| v.min(*l))
                .collect();
            if lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
                return invalid(format!(
                    "box {:?}..{:?} has no interior inside the domain",
                    part.lo, part.hi
                ));
            }
            clipped.push(BoxPart::new(lo, hi, part.amplitude));
        }
        Ok(Self {
            extents: extents.to_vec(),
            parts: clipped,
        })
    }

    /// Single interval `(a, b)` of `[0, length]`.
    pub fn interval(length: f64, a: f64, b: f64, amplitude: f64) -> Result<Self> {
        Self::new(&[length], vec![BoxPart::interval(a, b, amplitude)])
    }

    /// The whole domain with constant amplitude.
    pub fn full(extents: &[f64], amplitude: f64) -> Result<Self> {
        let lo = vec![0.0; extents.len()];
        Self::new(extents, vec![BoxPart::new(lo, extents.to_vec(), amplitude)])
    }

    /// Re-checks the invariants; useful on deserialized values.
    pub fn validate(&self) -> Result<()> {
        Region::new(&self.extents, self.parts.clone()).map(|_| ())
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.parts.iter().any(|b| b.contains(p))
    }

    /// Amplitude at `p`; zero outside the region.
    pub fn amplitude_at(&self, p: &[f64]) -> f64 {
        self.parts
            .iter()
            .filter(|b| b.contains(p))
            .map(|b| b.amplitude)
            .fold(0.0, f64::max)
    }

    pub fn max_amplitude(&self) -> f64 {
        self.parts.iter().map(|b| b.amplitude).fold(0.0, f64::max)
    }

    pub fn min_amplitude(&self) -> f64 {
        self.parts
            .iter()
            .map(|b| b.amplitude)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_part_width(&self) -> f64 {
        self.parts
            .iter()
            .map(BoxPart::min_width)
            .fold(f64::INFINITY, f64::min)
    }

    /// Same region with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let parts = self
            .parts
            .iter()
            .map(|p| BoxPart::new(p.lo.clone(), p.hi.clone(), p.amplitude * factor))
            .collect();
        Region::new(&self.extents, parts)
    }

    pub fn is_full_domain(&self) -> bool {
        self.parts.iter().any(|p| {
            p.lo.iter().all(|v| *v <= 0.0) && p.hi.iter().zip(&self.extents).all(|(v, l)| v >= l)
        })
    }
}

/// Nodal amplitude field of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub values: Vec<f64>,
    /// Set when no grid node falls inside the region.
    pub empty_support: bool,
}

pub fn indicator_vector(region: &Region, grid: &Grid) -> Result<IndicatorField> {
    if region.dim() != grid.dim() {
        return invalid("region and grid dimensions differ");
    }
    if region
        .extents
        .iter()
        .zip(grid.extents())
        .any(|(a, b)| (a - b).abs() > 1e-12 * b.max(1.0))
    {
        return invalid("region and grid live on different domains");
    }
    let values: Vec<f64> = (0..grid.len())
        .map(|i| {
            let p = grid.node(i);
            region.amplitude_at(&p[..grid.dim()])
        })
        .collect();
    let empty_support = (0..grid.len()).all(|i| !region.contains(&grid.node(i)[..grid.dim()]));
    Ok(IndicatorField {
        values,
        empty_support,
    })
}

/// Position, unit direction and elapsed time of a billiard ray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayState {
    pub position: Vec<f64>,
    pub direction: Vec<f64>,
    pub elapsed: f64,
}

fn fold(u: f64, length: f64) -> (f64, f64) {
    // Returns the folded coordinate and the sign applied to the velocity.
    let period = 2.0 * length;
    let r = u.rem_euclid(period);
    if r <= length {
        (r, 1.0)
    } else {
        (period - r, -1.0)
    }
}

impl RayState {
    pub fn new(position: Vec<f64>, direction: Vec<f64>) -> Self {
        Self {
            position,
            direction,
            elapsed: 0.0,
        }
    }

    /// State after travelling for `t` more time units inside the box.
    pub fn advance(&self, extents: &[f64], t: f64) -> RayState {
        let mut position = Vec::with_capacity(extents.len());
        let mut direction = Vec::with_capacity(extents.len());
        for ((x, d), l) in self.position.iter().zip(&self.direction).zip(extents) {
            let (p, s) = fold(x + d * t, *l);
            position.push(p);
            direction.push(d * s);
        }
        RayState {
            position,
            direction,
            elapsed: self.elapsed + t,
        }
    }

    /// Same point, reversed direction.
    pub fn reversed(&self) -> RayState {
        RayState {
            position: self.position.clone(),
            direction: self.direction.iter().map(|d| -d).collect(),
            elapsed: 0.0,
        }
    }

    /// Whether the unfolded segment of length `horizon` passes through a
    /// corner of the box (both coordinates on a wall at the same instant).
    fn hits_corner(&self, extents: &[f64], horizon: f64) -> bool {
        if extents.len() < 2 {
            return false;
        }
        let (x0, y0) = (self.position[0], self.position[1]);
        let (dx, dy) = (self.direction[0], self.direction[1]);
        if dx.abs() < 1e-14 || dy.abs() < 1e-14 {
            return false;
        }
        let (lx, ly) = (extents[0], extents[1]);
        let end = x0 + dx * horizon;
        let (kmin, kmax) = if dx > 0.0 {
            ((x0 / lx).ceil() as i64, (end / lx).floor() as i64)
        } else {
            ((end / lx).ceil() as i64, (x0 / lx).floor() as i64)
        };
        for k in kmin..=kmax {
            let t = (k as f64 * lx - x0) / dx;
            if t < 0.0 || t > horizon {
                continue;
            }
            let y = (y0 + dy * t) / ly;
            if (y - y.round()).abs() * ly < 1e-9 {
                return true;
            }
        }
        false
    }
}

/// Deterministic sampling lattice of initial ray positions and directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayLattice {
    /// Cell-centred positions per axis.
    pub positions_per_axis: usize,
    /// Number of equally spaced directions in 2D (rounded up to a multiple
    /// of 4 so that the four axis directions are present). Ignored in 1D.
    pub directions: usize,
}

impl RayLattice {
    /// Lattice with roughly `n_rays` rays for a domain of dimension `dim`.
    pub fn from_n_rays(n_rays: usize, dim: usize) -> Self {
        if dim == 1 {
            Self {
                positions_per_axis: n_rays.div_ceil(2).max(1),
                directions: 2,
            }
        } else {
            let root = (n_rays as f64).sqrt().round() as usize;
            let directions = (root.div_ceil(4) * 4).max(8);
            let per_axis = ((n_rays as f64 / directions as f64).sqrt().ceil() as usize).max(1);
            Self {
                positions_per_axis: per_axis,
                directions,
            }
        }
    }

    fn rays(&self, extents: &[f64]) -> Vec<RayState> {
        let m = self.positions_per_axis.max(1);
        let coord = |i: usize, l: f64| (i as f64 + 0.5) * l / m as f64;
        if extents.len() == 1 {
            let mut rays = Vec::with_capacity(2 * m);
            for i in 0..m {
                for d in [1.0, -1.0] {
                    rays.push(RayState::new(vec![coord(i, extents[0])], vec![d]));
                }
            }
            rays
        } else {
            let nd = self.directions.div_ceil(4).max(1) * 4;
            let mut rays = Vec::with_capacity(m * m * nd);
            for j in 0..m {
                for i in 0..m {
                    for k in 0..nd {
                        let angle = 2.0 * std::f64::consts::PI * k as f64 / nd as f64;
                        // exact axis directions
                        let (s, c) = match (4 * k) % nd {
                            0 => match 4 * k / nd {
                                0 => (0.0, 1.0),
                                1 => (1.0, 0.0),
                                2 => (0.0, -1.0),
                                _ => (-1.0, 0.0),
                            },
                            _ => angle.sin_cos(),
                        };
                        rays.push(RayState::new(
                            vec![coord(i, extents[0]), coord(j, extents[1])],
                            vec![c, s],
                        ));
                    }
                }
            }
            rays
        }
    }
}

/// Verdict of a sampled Geometric Control Condition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GccReport {
    pub region: Region,
    pub horizon: f64,
    pub dt_ray: f64,
    pub rays_total: usize,
    pub rays_hit: usize,
    /// Rays whose first direction ran into a corner and were re-sampled.
    pub corner_resampled: usize,
    pub min_hit_time: Option<f64>,
    pub max_hit_time_among_hitters: Option<f64>,
    pub worst_ray: Option<RayState>,
    pub pass: bool,
}

struct RayOutcome {
    start: RayState,
    hit_time: Option<f64>,
    resampled: bool,
}

fn trace_ray(region: &Region, start: RayState, horizon: f64, dt_ray: f64) -> RayOutcome {
    let extents = &region.extents;
    let mut ray = start;
    let mut resampled = false;
    let mut attempt = 0;
    while ray.hits_corner(extents, horizon) && attempt < 16 {
        attempt += 1;
        resampled = true;
        let rot = 1e-3 * attempt as f64;
        let (s, c) = rot.sin_cos();
        let (dx, dy) = (ray.direction[0], ray.direction[1]);
        ray.direction = vec![c * dx - s * dy, s * dx + c * dy];
    }
    let steps = (horizon / dt_ray).ceil() as usize;
    let mut hit_time = None;
    for k in 0..=steps {
        let t = (k as f64 * dt_ray).min(horizon);
        if region.contains(&ray.advance(extents, t).position) {
            hit_time = Some(t);
            break;
        }
    }
    RayOutcome {
        start: ray,
        hit_time,
        resampled,
    }
}

/// Samples rays on the default lattice for `n_rays` and checks that each
/// one enters `region` within time `horizon`.
pub fn gcc_check(region: &Region, horizon: f64, n_rays: usize, dt_ray: f64) -> Result<GccReport> {
    if n_rays == 0 {
        return invalid("n_rays must be >= 1");
    }
    gcc_check_with(
        region,
        horizon,
        &RayLattice::from_n_rays(n_rays, region.dim()),
        dt_ray,
    )
}

pub fn gcc_check_with(
    region: &Region,
    horizon: f64,
    lattice: &RayLattice,
    dt_ray: f64,
) -> Result<GccReport> {
    if !(horizon > 0.0) {
        return invalid("horizon T must be positive");
    }
    if !(dt_ray > 0.0) {
        return invalid("dt_ray must be positive");
    }
    if region.parts.is_empty() {
        return invalid("region is empty");
    }
    let min_width = region.min_part_width();
    if dt_ray >= min_width {
        return Err(Error::StepTooCoarse { dt_ray, min_width });
    }
    let rays = lattice.rays(&region.extents);
    let outcomes: Vec<RayOutcome> = rays
        .into_par_iter()
        .map(|r| trace_ray(region, r, horizon, dt_ray))
        .collect();

    let rays_total = outcomes.len();
    let mut rays_hit = 0;
    let mut corner_resampled = 0;
    let mut min_hit: Option<f64> = None;
    let mut max_hit: Option<f64> = None;
    let mut worst_ray = None;
    for o in outcomes {
        if o.resampled {
            corner_resampled += 1;
        }
        match o.hit_time {
            Some(t) => {
                rays_hit += 1;
                min_hit = Some(min_hit.map_or(t, |m| m.min(t)));
                max_hit = Some(max_hit.map_or(t, |m| m.max(t)));
            }
            None => {
                if worst_ray.is_none() {
                    worst_ray = Some(o.start);
                }
            }
        }
    }
    Ok(GccReport {
        region: region.clone(),
        horizon,
        dt_ray,
        rays_total,
        rays_hit,
        corner_resampled,
        min_hit_time: min_hit,
        max_hit_time_among_hitters: max_hit,
        worst_ray,
        pass: rays_hit == rays_total,
    })
}

/// Largest first-hit time over the lattice, measured with a generous horizon.
/// Returns `None` when some sampled ray never reaches the region.
pub fn gcc_time(region: &Region, n_rays: usize, dt_ray: f64) -> Result<Option<f64>> {
    let diameter: f64 = region.extents.iter().map(|l| l * l).sum::<f64>().sqrt();
    let report = gcc_check(region, 20.0 * diameter, n_rays, dt_ray)?;
    Ok(if report.pass {
        report.max_hit_time_among_hitters
    } else {
        None
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_1d_nodes() {
        let g = build_grid(&[1.0], &[3]).unwrap();
        assert_eq!(g.h(), &[0.25]);
        let xs: Vec<f64> = (0..3).map(|i| g.node(i)[0]).collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn grid_2d_counts() {
        let g = build_grid(&[1.0, 1.0], &[4, 4]).unwrap();
        assert_eq!(g.len(), 16);
        assert!((g.h()[0] - 0.2).abs() < 1e-15 && (g.h()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(build_grid(&[1.0], &[1]), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_grid(&[0.0], &[4]), Err(Error::InvalidArgument(_))));
        assert!(build_grid(&[1.0, 1.0, 1.0], &[3, 3, 3]).is_err());
    }

    #[test]
    fn indicator_examples() {
        let g = build_grid(&[1.0], &[3]).unwrap();
        let r = Region::interval(1.0, 0.4, 0.6, 1.0).unwrap();
        let f = indicator_vector(&r, &g).unwrap();
        assert_eq!(f.values, vec![0.0, 1.0, 0.0]);
        assert!(!f.empty_support);

        let r = Region::interval(1.0, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(indicator_vector(&r, &g).unwrap().values, vec![2.0; 3]);

        let r = Region::interval(1.0, 0.9, 0.95, 1.0).unwrap();
        let f = indicator_vector(&r, &g).unwrap();
        assert_eq!(f.values, vec![0.0; 3]);
        assert!(f.empty_support);
    }

    #[test]
    fn region_clips_and_validates() {
        let r = Region::interval(1.0, -0.5, 0.3, 1.0).unwrap();
        assert_eq!(r.parts[0].lo, vec![0.0]);
        assert!(Region::interval(1.0, 1.2, 1.5, 1.0).is_err());
        assert!(Region::interval(1.0, 0.2, 0.4, -1.0).is_err());
    }

    #[test]
    fn gcc_1d_worst_time() {
        let r = Region::interval(1.0, 0.4, 0.6, 1.0).unwrap();
        let dt = 1e-3;
        let rep = gcc_check(&r, 1.0, 2000, dt).unwrap();
        assert!(rep.pass);
        let worst = rep.max_hit_time_among_hitters.unwrap();
        assert!((worst - 0.8).abs() <= 2.0 * dt, "worst {worst}");
        assert_eq!(rep.min_hit_time, Some(0.0));
    }

    #[test]
    fn gcc_step_too_coarse() {
        let r = Region::interval(1.0, 0.4, 0.45, 1.0).unwrap();
        assert!(matches!(
            gcc_check(&r, 1.0, 10, 0.06),
            Err(Error::StepTooCoarse { .. })
        ));
    }

    #[test]
    fn vertical_strip_fails() {
        let r = Region::new(
            &[1.0, 1.0],
            vec![BoxPart::new(vec![0.4, 0.0], vec![0.6, 1.0], 1.0)],
        )
        .unwrap();
        let lattice = RayLattice {
            positions_per_axis: 5,
            directions: 16,
        };
        let rep = gcc_check_with(&r, 10.0, &lattice, 0.01).unwrap();
        assert!(!rep.pass);
        let w = rep.worst_ray.unwrap();
        assert_eq!(w.direction[0], 0.0);
    }

    #[test]
    fn corner_rays_are_resampled() {
        let r = Region::new(
            &[1.0, 1.0],
            vec![BoxPart::new(vec![0.0, 0.0], vec![0.2, 1.0], 1.0)],
        )
        .unwrap();
        let lattice = RayLattice {
            positions_per_axis: 1,
            directions: 8,
        };
        let rep = gcc_check_with(&r, 4.0, &lattice, 0.01).unwrap();
        // the diagonal rays from the centre run into corners
        assert!(rep.corner_resampled >= 4);
    }

    #[test]
    fn fold_reflects() {
        let ray = RayState::new(vec![0.9], vec![1.0]);
        let s = ray.advance(&[1.0], 0.3);
        assert!((s.position[0] - 0.8).abs() < 1e-14);
        assert_eq!(s.direction[0], -1.0);
    }
}
