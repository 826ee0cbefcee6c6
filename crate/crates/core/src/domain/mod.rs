//! Discretized domains: grid nodes, boundary patches, cut-cell quadrature and
//! the finite-difference stencils consumed by the solvers.
//!
//! Node ordering is fixed: interior grid nodes first (row-major), then the
//! outer boundary nodes sorted by boundary parameter, then the nodes on the
//! obstacle boundary. Interior ordering keeps every solver matrix banded.
//!
//! On the disk, outer boundary nodes are the crossings of grid lines with
//! the circle, so every boundary value is sampled exactly on `∂Ω`.

mod fit;
pub mod geometry;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use fit::Stencil;
use geometry::{disk_rect_area, rect_rect_area, segment_circle_crossing};

/// Distance (in grid spacings) under which a grid node is snapped onto a boundary.
const SNAP: f64 = 1e-8;
/// Radius (in grid spacings) of the least-squares neighbourhood on the disk boundary.
const FIT_RADIUS: f64 = 3.2;
const FIT_DEGREE: usize = 3;
/// Minimum obstacle clearance from `∂Ω`, in grid cells.
pub const OBSTACLE_CLEARANCE_CELLS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    UnitDisk,
    UnitSquare,
}

impl Shape {
    /// Period of the boundary parameter: angle on the disk, arclength on the square.
    pub fn boundary_period(self) -> f64 {
        match self {
            Shape::UnitDisk => 2.0 * PI,
            Shape::UnitSquare => 4.0,
        }
    }
}

/// Half-open interval `[start, end)` of the boundary parameter.
///
/// On the disk the parameter is the polar angle; on the unit square it is
/// counter-clockwise arclength from the corner `(0, 0)`, so the bottom edge
/// is `[0, 1)`. Intervals may wrap past the period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct BoundaryArc {
    pub start: f64,
    pub end: f64,
}

impl From<[f64; 2]> for BoundaryArc {
    fn from(v: [f64; 2]) -> Self {
        BoundaryArc { start: v[0], end: v[1] }
    }
}

impl From<BoundaryArc> for [f64; 2] {
    fn from(a: BoundaryArc) -> Self {
        [a.start, a.end]
    }
}

impl BoundaryArc {
    pub fn new(start: f64, end: f64) -> Self {
        BoundaryArc { start, end }
    }

    pub fn full(shape: Shape) -> Self {
        BoundaryArc { start: 0.0, end: shape.boundary_period() }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, s: f64, period: f64) -> bool {
        (s - self.start).rem_euclid(period) < self.length()
    }

    /// Position within the arc in `[0, 1)`, if contained.
    pub fn local_coordinate(&self, s: f64, period: f64) -> Option<f64> {
        let d = (s - self.start).rem_euclid(period);
        (d < self.length()).then(|| d / self.length())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleParams {
    pub center: [f64; 2],
    pub radius: f64,
}

impl CircleParams {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        CircleParams { center, radius }
    }
}

/// Omitted arcs default to the whole boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawDomainConfig")]
pub struct DomainConfig {
    pub shape: Shape,
    pub n_cells_per_side: usize,
    pub gamma1_arc: BoundaryArc,
    pub gamma2_arc: BoundaryArc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<CircleParams>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomainConfig {
    shape: Shape,
    n_cells_per_side: usize,
    gamma1_arc: Option<BoundaryArc>,
    gamma2_arc: Option<BoundaryArc>,
    #[serde(default)]
    obstacle: Option<CircleParams>,
}

impl From<RawDomainConfig> for DomainConfig {
    fn from(r: RawDomainConfig) -> Self {
        let full = BoundaryArc::full(r.shape);
        DomainConfig {
            shape: r.shape,
            n_cells_per_side: r.n_cells_per_side,
            gamma1_arc: r.gamma1_arc.unwrap_or(full),
            gamma2_arc: r.gamma2_arc.unwrap_or(full),
            obstacle: r.obstacle,
        }
    }
}

impl DomainConfig {
    /// Full-boundary configuration (`Γ₁ = Γ₂ = ∂Ω`).
    pub fn full(shape: Shape, n: usize) -> Self {
        DomainConfig {
            shape,
            n_cells_per_side: n,
            gamma1_arc: BoundaryArc::full(shape),
            gamma2_arc: BoundaryArc::full(shape),
            obstacle: None,
        }
    }

    pub fn disk(n: usize) -> Self {
        Self::full(Shape::UnitDisk, n)
    }

    pub fn square(n: usize) -> Self {
        Self::full(Shape::UnitSquare, n)
    }

    pub fn with_arcs(mut self, gamma1: BoundaryArc, gamma2: BoundaryArc) -> Self {
        self.gamma1_arc = gamma1;
        self.gamma2_arc = gamma2;
        self
    }

    pub fn with_obstacle(mut self, obstacle: Option<CircleParams>) -> Self {
        self.obstacle = obstacle;
        self
    }

    /// Same geometry at a different resolution.
    pub fn with_resolution(&self, n: usize) -> Self {
        DomainConfig { n_cells_per_side: n, ..self.clone() }
    }

    pub fn grid_spacing(&self) -> f64 {
        match self.shape {
            Shape::UnitDisk => 2.0 / self.n_cells_per_side as f64,
            Shape::UnitSquare => 1.0 / self.n_cells_per_side as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_cells_per_side < 4 {
            return Err(Error::InvalidConfig(format!(
                "n_cells_per_side must be >= 4, got {}",
                self.n_cells_per_side
            )));
        }
        let period = self.shape.boundary_period();
        for (name, arc) in [("gamma1_arc", self.gamma1_arc), ("gamma2_arc", self.gamma2_arc)] {
            let len = arc.length();
            if !(len > 0.0 && len <= period + 1e-12) || !arc.start.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must have positive length at most {period}, got [{}, {})",
                    arc.start, arc.end
                )));
            }
        }
        if let Some(ob) = self.obstacle {
            let h = self.grid_spacing();
            if !(ob.radius > 0.0) {
                return Err(Error::InvalidConfig("obstacle radius must be positive".into()));
            }
            if ob.radius < 2.0 * h {
                return Err(Error::InvalidConfig(format!(
                    "obstacle radius {} below two grid spacings ({})",
                    ob.radius,
                    2.0 * h
                )));
            }
            let [cx, cy] = ob.center;
            let clearance = match self.shape {
                Shape::UnitDisk => 1.0 - ((cx * cx + cy * cy).sqrt() + ob.radius),
                Shape::UnitSquare => (cx - ob.radius)
                    .min(1.0 - cx - ob.radius)
                    .min(cy - ob.radius)
                    .min(1.0 - cy - ob.radius),
            };
            let required = OBSTACLE_CLEARANCE_CELLS * h;
            if clearance < required {
                return Err(Error::ObstacleTooClose { clearance, required });
            }
        }
        Ok(())
    }
}

/// Selection of outer boundary nodes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoundaryMask(Vec<bool>);

impl BoundaryMask {
    pub fn new(flags: Vec<bool>) -> Self {
        BoundaryMask(flags)
    }

    pub fn all(n: usize) -> Self {
        BoundaryMask(vec![true; n])
    }

    pub fn none(n: usize) -> Self {
        BoundaryMask(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0[k]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        BoundaryMask(self.0.iter().map(|b| !b).collect())
    }

    pub fn union(&self, other: &Self) -> Self {
        BoundaryMask(self.0.iter().zip(&other.0).map(|(a, b)| *a || *b).collect())
    }

    pub fn intersection(&self, other: &Self) -> Self {
        BoundaryMask(self.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect())
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| !*a || *b)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(k, _)| k)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// Complex values on the outer boundary nodes, defined on a mask and zero
/// elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTrace {
    values: Vec<Complex64>,
    mask: BoundaryMask,
}

impl BoundaryTrace {
    pub fn zeros(mask: BoundaryMask) -> Self {
        BoundaryTrace { values: vec![Complex64::new(0.0, 0.0); mask.len()], mask }
    }

    /// Builds a trace from full-length values; entries off the mask are zeroed.
    pub fn new(mut values: Vec<Complex64>, mask: BoundaryMask) -> Self {
        assert_eq!(values.len(), mask.len(), "trace length must match the mask");
        for (v, m) in values.iter_mut().zip(mask.as_slice()) {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        BoundaryTrace { values, mask }
    }

    /// Samples `g(s, x, y)` on the masked nodes, `s` being the boundary parameter.
    pub fn from_fn(
        domain: &Domain,
        mask: &BoundaryMask,
        g: impl Fn(f64, f64, f64) -> Complex64,
    ) -> Self {
        let values = (0..domain.n_outer())
            .map(|k| {
                if mask.contains(k) {
                    let [x, y] = domain.outer_coord(k);
                    g(domain.boundary_param(k), x, y)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        BoundaryTrace { values, mask: mask.clone() }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn mask(&self) -> &BoundaryMask {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn restrict(&self, mask: &BoundaryMask) -> Self {
        BoundaryTrace::new(self.values.clone(), self.mask.intersection(mask))
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        BoundaryTrace {
            values: self.values.iter().map(|v| v * s).collect(),
            mask: self.mask.clone(),
        }
    }

    /// `Σ cₗ fₗ` over traces sharing the same length.
    pub fn linear_combination(terms: &[(Complex64, &BoundaryTrace)]) -> Self {
        let n = terms[0].1.len();
        let mut values = vec![Complex64::new(0.0, 0.0); n];
        let mut mask = BoundaryMask::none(n);
        for (c, t) in terms {
            mask = mask.union(&t.mask);
            for (v, w) in values.iter_mut().zip(&t.values) {
                *v += c * w;
            }
        }
        BoundaryTrace { values, mask }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest magnitude found outside `mask`.
    pub fn leak_outside(&self, mask: &BoundaryMask) -> f64 {
        self.values
            .iter()
            .zip(mask.as_slice())
            .filter(|(_, m)| !**m)
            .map(|(v, _)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }
}

/// Complex grid function over all domain nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field { values: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn from_values(values: Vec<Complex64>) -> Self {
        Field { values }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Field { values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect() }
    }

    pub fn from_fn(domain: &Domain, g: impl Fn(f64, f64) -> Complex64) -> Self {
        Field { values: domain.coords().iter().map(|p| g(p[0], p[1])).collect() }
    }

    pub fn from_real_fn(domain: &Domain, g: impl Fn(f64, f64) -> f64) -> Self {
        Field::from_fn(domain, |x, y| Complex64::new(g(x, y), 0.0))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sup_norm_on(&self, range: std::ops::Range<usize>) -> f64 {
        self.values[range].iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, a: Complex64, other: &Field) {
        for (v, w) in self.values.iter_mut().zip(&other.values) {
            *v += a * w;
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, s: Complex64) -> Field {
        Field { values: self.values.iter().map(|v| v * s).collect() }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Field {
        Field {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum NodeClass {
    Outside,
    OuterBoundary,
    Interior,
    ObstacleBoundary,
    InsideObstacle,
}

/// One arm of a (possibly cut) five-point stencil: neighbour node and arm
/// length as a fraction of the grid spacing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arm {
    pub node: usize,
    pub frac: f64,
}

/// Discretized domain. Immutable after construction.
#[derive(Debug)]
pub struct Domain {
    config: DomainConfig,
    h: f64,
    coords: Vec<[f64; 2]>,
    n_interior: usize,
    n_outer: usize,
    boundary_param: Vec<f64>,
    boundary_normal: Vec<[f64; 2]>,
    boundary_weight: Vec<f64>,
    gamma1: BoundaryMask,
    gamma2: BoundaryMask,
    gamma_tilde: BoundaryMask,
    /// West, east, south, north arms per interior node.
    arms: Vec<[Arm; 4]>,
    grad_x: Vec<Stencil>,
    grad_y: Vec<Stencil>,
    normal: Vec<Stencil>,
    quad_weight: Vec<f64>,
}

const DIRS: [[f64; 2]; 4] = [[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]];
const DIJ: [[i64; 2]; 4] = [[-1, 0], [1, 0], [0, -1], [0, 1]];

impl Domain {
    pub fn build(cfg: &DomainConfig) -> Result<Domain> {
        cfg.validate()?;
        let n = cfg.n_cells_per_side;
        let h = cfg.grid_spacing();
        let origin = match cfg.shape {
            Shape::UnitDisk => -1.0,
            Shape::UnitSquare => 0.0,
        };
        let period = cfg.shape.boundary_period();
        let side = n + 1;
        let grid_pt = |i: usize, j: usize| [origin + i as f64 * h, origin + j as f64 * h];
        let snap = SNAP * h;

        let outer_dist = |p: [f64; 2]| -> f64 {
            match cfg.shape {
                Shape::UnitDisk => (p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0,
                Shape::UnitSquare => {
                    let d = p[0].min(1.0 - p[0]).min(p[1]).min(1.0 - p[1]);
                    -d
                }
            }
        };
        let obstacle_dist = |p: [f64; 2]| -> f64 {
            match cfg.obstacle {
                Some(ob) => {
                    ((p[0] - ob.center[0]).powi(2) + (p[1] - ob.center[1]).powi(2)).sqrt()
                        - ob.radius
                }
                None => f64::INFINITY,
            }
        };

        // classify grid nodes
        let mut class = vec![NodeClass::Outside; side * side];
        for j in 0..side {
            for i in 0..side {
                let p = grid_pt(i, j);
                let d_out = outer_dist(p);
                let d_ob = obstacle_dist(p);
                class[j * side + i] = if d_out > snap {
                    NodeClass::Outside
                } else if d_out.abs() <= snap {
                    NodeClass::OuterBoundary
                } else if d_ob < -snap {
                    NodeClass::InsideObstacle
                } else if d_ob.abs() <= snap {
                    NodeClass::ObstacleBoundary
                } else {
                    NodeClass::Interior
                };
            }
        }

        let mut interior_of_grid = vec![usize::MAX; side * side];
        let mut interior_pts = Vec::new();
        for j in 0..side {
            for i in 0..side {
                if class[j * side + i] == NodeClass::Interior {
                    interior_of_grid[j * side + i] = interior_pts.len();
                    interior_pts.push((i, j));
                }
            }
        }
        let n_interior = interior_pts.len();
        if n_interior == 0 {
            return Err(Error::InvalidConfig("domain has no interior nodes".into()));
        }

        // Boundary points: either grid nodes on a boundary or arm crossings.
        #[derive(Clone, Copy)]
        enum BKey {
            Grid(usize),
            Cross(usize, usize),
        }
        let mut outer_pts: Vec<([f64; 2], BKey)> = Vec::new();
        let mut obst_pts: Vec<([f64; 2], BKey)> = Vec::new();
        for j in 0..side {
            for i in 0..side {
                let g = j * side + i;
                let p = grid_pt(i, j);
                match class[g] {
                    NodeClass::OuterBoundary => {
                        let p = match cfg.shape {
                            Shape::UnitDisk => {
                                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                                [p[0] / r, p[1] / r]
                            }
                            Shape::UnitSquare => p,
                        };
                        outer_pts.push((p, BKey::Grid(g)));
                    }
                    NodeClass::ObstacleBoundary => {
                        let ob = cfg.obstacle.unwrap();
                        let dx = p[0] - ob.center[0];
                        let dy = p[1] - ob.center[1];
                        let r = (dx * dx + dy * dy).sqrt();
                        let q = [ob.center[0] + ob.radius * dx / r, ob.center[1] + ob.radius * dy / r];
                        obst_pts.push((q, BKey::Grid(g)));
                    }
                    _ => {}
                }
            }
        }
        for (k, &(i, j)) in interior_pts.iter().enumerate() {
            let p = grid_pt(i, j);
            for (dir, dij) in DIJ.iter().enumerate() {
                let ni = i as i64 + dij[0];
                let nj = j as i64 + dij[1];
                let nclass = if ni < 0 || nj < 0 || ni >= side as i64 || nj >= side as i64 {
                    NodeClass::Outside
                } else {
                    class[nj as usize * side + ni as usize]
                };
                let d = [DIRS[dir][0] * h, DIRS[dir][1] * h];
                match nclass {
                    NodeClass::Outside => {
                        let t = segment_circle_crossing(p, d, [0.0, 0.0], 1.0)
                            .expect("interior-to-outside arm crosses the boundary");
                        let q = [p[0] + t * d[0], p[1] + t * d[1]];
                        let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
                        outer_pts.push(([q[0] / r, q[1] / r], BKey::Cross(k, dir)));
                    }
                    NodeClass::InsideObstacle => {
                        let ob = cfg.obstacle.unwrap();
                        let t = segment_circle_crossing(p, d, ob.center, ob.radius)
                            .expect("arm into the obstacle crosses its boundary");
                        obst_pts.push(([p[0] + t * d[0], p[1] + t * d[1]], BKey::Cross(k, dir)));
                    }
                    _ => {}
                }
            }
        }

        let param_of = |p: [f64; 2]| -> f64 {
            match cfg.shape {
                Shape::UnitDisk => p[1].atan2(p[0]).rem_euclid(2.0 * PI),
                Shape::UnitSquare => {
                    let (x, y) = (p[0], p[1]);
                    let eps = 1e-12;
                    if y.abs() < eps && x < 1.0 - eps {
                        x
                    } else if (x - 1.0).abs() < eps && y < 1.0 - eps {
                        1.0 + y
                    } else if (y - 1.0).abs() < eps && x > eps {
                        3.0 - x
                    } else {
                        (4.0 - y).rem_euclid(4.0)
                    }
                }
            }
        };
        let mut outer: Vec<(f64, [f64; 2], BKey)> =
            outer_pts.into_iter().map(|(p, key)| (param_of(p), p, key)).collect();
        outer.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n_outer = outer.len();

        let mut obst: Vec<(f64, [f64; 2], BKey)> = obst_pts
            .into_iter()
            .map(|(p, key)| {
                let c = cfg.obstacle.unwrap().center;
                ((p[1] - c[1]).atan2(p[0] - c[0]), p, key)
            })
            .collect();
        obst.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        // global indices
        let mut coords: Vec<[f64; 2]> = interior_pts.iter().map(|&(i, j)| grid_pt(i, j)).collect();
        let mut node_of_grid = interior_of_grid.clone();
        let mut cross_node = vec![[usize::MAX; 4]; n_interior];
        for (offset, list) in [(n_interior, &outer), (n_interior + n_outer, &obst)] {
            for (k, (_, p, key)) in list.iter().enumerate() {
                coords.push(*p);
                match *key {
                    BKey::Grid(g) => node_of_grid[g] = offset + k,
                    BKey::Cross(node, dir) => cross_node[node][dir] = offset + k,
                }
            }
        }

        let mut arms = Vec::with_capacity(n_interior);
        for (k, &(i, j)) in interior_pts.iter().enumerate() {
            let p = grid_pt(i, j);
            let mut a = [Arm { node: 0, frac: 1.0 }; 4];
            for (dir, dij) in DIJ.iter().enumerate() {
                let ni = (i as i64 + dij[0]) as usize;
                let nj = (j as i64 + dij[1]) as usize;
                a[dir] = if cross_node[k][dir] != usize::MAX {
                    let q = coords[cross_node[k][dir]];
                    let frac = ((q[0] - p[0]).abs() + (q[1] - p[1]).abs()) / h;
                    Arm { node: cross_node[k][dir], frac }
                } else {
                    Arm { node: node_of_grid[nj * side + ni], frac: 1.0 }
                };
                debug_assert!(a[dir].node != usize::MAX);
            }
            arms.push(a);
        }

        let boundary_param: Vec<f64> = outer.iter().map(|o| o.0).collect();
        let boundary_normal: Vec<[f64; 2]> = outer
            .iter()
            .map(|(s, p, _)| match cfg.shape {
                Shape::UnitDisk => *p,
                Shape::UnitSquare => match *s {
                    s if s < 1.0 => [0.0, -1.0],
                    s if s < 2.0 => [1.0, 0.0],
                    s if s < 3.0 => [0.0, 1.0],
                    _ => [-1.0, 0.0],
                },
            })
            .collect();
        let boundary_weight: Vec<f64> = (0..n_outer)
            .map(|k| {
                let prev = boundary_param[(k + n_outer - 1) % n_outer];
                let next = boundary_param[(k + 1) % n_outer];
                let gap_prev = (boundary_param[k] - prev).rem_euclid(period);
                let gap_next = (next - boundary_param[k]).rem_euclid(period);
                0.5 * (gap_prev + gap_next)
            })
            .collect();

        let mask_of = |arc: BoundaryArc| {
            BoundaryMask::new(boundary_param.iter().map(|&s| arc.contains(s, period)).collect())
        };
        let gamma1 = mask_of(cfg.gamma1_arc);
        let gamma2 = mask_of(cfg.gamma2_arc);
        if gamma1.count() == 0 {
            return Err(Error::EmptyPatch("gamma1"));
        }
        if gamma2.count() == 0 {
            return Err(Error::EmptyPatch("gamma2"));
        }
        let gamma_tilde = gamma1.union(&gamma2).complement();

        let n_nodes = coords.len();
        let mut dom = Domain {
            config: cfg.clone(),
            h,
            coords,
            n_interior,
            n_outer,
            boundary_param,
            boundary_normal,
            boundary_weight,
            gamma1,
            gamma2,
            gamma_tilde,
            arms,
            grad_x: vec![Vec::new(); n_nodes],
            grad_y: vec![Vec::new(); n_nodes],
            normal: Vec::new(),
            quad_weight: vec![0.0; n_nodes],
        };

        // gradient stencils on interior nodes: non-uniform centred differences
        for k in 0..n_interior {
            let [w, e, s, nn] = dom.arms[k];
            dom.grad_x[k] = centred(k, w, e, h);
            dom.grad_y[k] = centred(k, s, nn, h);
        }

        // gradient stencils on outer boundary nodes
        let grid_node = |i: i64, j: i64| -> Option<usize> {
            if i < 0 || j < 0 || i >= side as i64 || j >= side as i64 {
                return None;
            }
            let g = j as usize * side + i as usize;
            match class[g] {
                NodeClass::Interior | NodeClass::OuterBoundary | NodeClass::ObstacleBoundary => {
                    Some(node_of_grid[g])
                }
                _ => None,
            }
        };
        match cfg.shape {
            Shape::UnitSquare => {
                for k in 0..n_outer {
                    let node = n_interior + k;
                    let p = dom.coords[node];
                    let i = ((p[0] - origin) / h).round() as i64;
                    let j = ((p[1] - origin) / h).round() as i64;
                    let axis = |di: i64, dj: i64| -> Stencil {
                        match (grid_node(i - di, j - dj), grid_node(i + di, j + dj)) {
                            (Some(m), Some(pp)) => vec![(m, -0.5 / h), (pp, 0.5 / h)],
                            (None, Some(p1)) => {
                                let p2 = grid_node(i + 2 * di, j + 2 * dj).unwrap();
                                vec![(node, -1.5 / h), (p1, 2.0 / h), (p2, -0.5 / h)]
                            }
                            (Some(m1), None) => {
                                let m2 = grid_node(i - 2 * di, j - 2 * dj).unwrap();
                                vec![(node, 1.5 / h), (m1, -2.0 / h), (m2, 0.5 / h)]
                            }
                            (None, None) => unreachable!("square boundary node without neighbours"),
                        }
                    };
                    dom.grad_x[node] = axis(1, 0);
                    dom.grad_y[node] = axis(0, 1);
                }
            }
            Shape::UnitDisk => {
                let reach = (FIT_RADIUS).ceil() as i64;
                for k in 0..n_outer {
                    let node = n_interior + k;
                    let c = dom.coords[node];
                    let ci = ((c[0] - origin) / h).round() as i64;
                    let cj = ((c[1] - origin) / h).round() as i64;
                    let mut nb: Vec<(usize, [f64; 2])> = Vec::new();
                    let close = |p: [f64; 2]| {
                        let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                        d2 <= (FIT_RADIUS * h).powi(2)
                    };
                    for j in cj - reach..=cj + reach {
                        for i in ci - reach..=ci + reach {
                            if let Some(m) = grid_node(i, j) {
                                if m < n_interior && close(dom.coords[m]) {
                                    nb.push((m, dom.coords[m]));
                                }
                            }
                        }
                    }
                    for off in 1..n_outer {
                        let mut found = false;
                        for kk in [(k + off) % n_outer, (k + n_outer - off) % n_outer] {
                            let m = n_interior + kk;
                            if close(dom.coords[m]) {
                                found = true;
                                if !nb.iter().any(|x| x.0 == m) {
                                    nb.push((m, dom.coords[m]));
                                }
                            }
                        }
                        if !found {
                            break;
                        }
                    }
                    let (gx, gy) = fit::ls_gradient(node, c, &nb, h, FIT_DEGREE);
                    dom.grad_x[node] = gx;
                    dom.grad_y[node] = gy;
                }
            }
        }
        dom.normal = (0..n_outer)
            .map(|k| {
                let node = n_interior + k;
                let nrm = dom.boundary_normal[k];
                let mut st: Stencil = Vec::new();
                for &(m, w) in &dom.grad_x[node] {
                    st.push((m, nrm[0] * w));
                }
                for &(m, w) in &dom.grad_y[node] {
                    st.push((m, nrm[1] * w));
                }
                merge(st)
            })
            .collect();

        // dual-cell quadrature weights; cut areas that belong to no node are
        // handed to the nearest interior node
        for j in 0..side {
            for i in 0..side {
                let p = grid_pt(i, j);
                let cell = [p[0] - 0.5 * h, p[0] + 0.5 * h, p[1] - 0.5 * h, p[1] + 0.5 * h];
                let mut area = match cfg.shape {
                    Shape::UnitDisk => disk_rect_area([0.0, 0.0], 1.0, cell[0], cell[1], cell[2], cell[3]),
                    Shape::UnitSquare => rect_rect_area(cell, [0.0, 1.0, 0.0, 1.0]),
                };
                if let Some(ob) = cfg.obstacle {
                    area -= disk_rect_area(ob.center, ob.radius, cell[0], cell[1], cell[2], cell[3]);
                }
                if area <= 1e-14 * h * h {
                    continue;
                }
                let g = j * side + i;
                let owner = match class[g] {
                    NodeClass::Interior | NodeClass::OuterBoundary => node_of_grid[g],
                    _ => {
                        let mut best = (f64::INFINITY, usize::MAX);
                        for jj in j as i64 - 3..=j as i64 + 3 {
                            for ii in i as i64 - 3..=i as i64 + 3 {
                                if let Some(m) = grid_node(ii, jj) {
                                    if m < n_interior {
                                        let q = dom.coords[m];
                                        let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                                        if d < best.0 || (d == best.0 && m < best.1) {
                                            best = (d, m);
                                        }
                                    }
                                }
                            }
                        }
                        best.1
                    }
                };
                dom.quad_weight[owner] += area;
            }
        }
        Ok(dom)
    }

    pub fn config(&self) -> &DomainConfig {
        &self.config
    }

    pub fn shape(&self) -> Shape {
        self.config.shape
    }

    pub fn grid_spacing(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// Number of nodes on the outer boundary `∂Ω`.
    pub fn n_outer(&self) -> usize {
        self.n_outer
    }

    pub fn n_obstacle(&self) -> usize {
        self.coords.len() - self.n_interior - self.n_outer
    }

    pub fn interior_range(&self) -> std::ops::Range<usize> {
        0..self.n_interior
    }

    pub fn outer_range(&self) -> std::ops::Range<usize> {
        self.n_interior..self.n_interior + self.n_outer
    }

    pub fn obstacle_range(&self) -> std::ops::Range<usize> {
        self.n_interior + self.n_outer..self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Coordinates of outer boundary node `k`.
    pub fn outer_coord(&self, k: usize) -> [f64; 2] {
        self.coords[self.n_interior + k]
    }

    pub fn boundary_param(&self, k: usize) -> f64 {
        self.boundary_param[k]
    }

    pub fn boundary_params(&self) -> &[f64] {
        &self.boundary_param
    }

    pub fn boundary_normal(&self, k: usize) -> [f64; 2] {
        self.boundary_normal[k]
    }

    /// Arclength quadrature weights on `∂Ω`.
    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weight
    }

    pub fn gamma1(&self) -> &BoundaryMask {
        &self.gamma1
    }

    pub fn gamma2(&self) -> &BoundaryMask {
        &self.gamma2
    }

    /// Inaccessible part `∂Ω ∖ (Γ₁ ∪ Γ₂)`.
    pub fn gamma_tilde(&self) -> &BoundaryMask {
        &self.gamma_tilde
    }

    pub fn full_boundary(&self) -> BoundaryMask {
        BoundaryMask::all(self.n_outer)
    }

    /// Mask of the outer nodes whose parameter lies in `arc`.
    pub fn arc_mask(&self, arc: BoundaryArc) -> BoundaryMask {
        let period = self.shape().boundary_period();
        BoundaryMask::new(self.boundary_param.iter().map(|&s| arc.contains(s, period)).collect())
    }

    pub fn arms(&self) -> &[[Arm; 4]] {
        &self.arms
    }

    pub fn grad_stencils(&self) -> (&[Stencil], &[Stencil]) {
        (&self.grad_x, &self.grad_y)
    }

    pub fn normal_stencils(&self) -> &[Stencil] {
        &self.normal
    }

    /// Node quadrature weights (cut-cell areas); they sum to `|Ω|`.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.quad_weight
    }

    pub fn area(&self) -> f64 {
        self.quad_weight.iter().sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.boundary_weight.iter().sum()
    }

    pub fn check_field(&self, f: &Field) -> Result<()> {
        if f.len() != self.node_count() {
            return Err(Error::DomainMismatch { expected: self.node_count(), got: f.len() });
        }
        Ok(())
    }

    /// Outer boundary values of a field as a full-boundary trace.
    pub fn trace(&self, u: &Field) -> BoundaryTrace {
        BoundaryTrace::new(u.values()[self.outer_range()].to_vec(), self.full_boundary())
    }

    /// Outward normal derivative on the masked outer boundary nodes.
    pub fn normal_derivative(&self, u: &Field, patch: &BoundaryMask) -> Result<BoundaryTrace> {
        self.check_field(u)?;
        let vals = u.values();
        let out: Vec<Complex64> = (0..self.n_outer)
            .map(|k| {
                if patch.contains(k) {
                    apply(&self.normal[k], vals)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("normal_derivative"));
        }
        Ok(BoundaryTrace::new(out, patch.clone()))
    }

    /// Discrete gradient at every node.
    pub fn gradient(&self, u: &Field) -> (Field, Field) {
        let vals = u.values();
        let gx = self.grad_x.iter().map(|st| apply(st, vals)).collect();
        let gy = self.grad_y.iter().map(|st| apply(st, vals)).collect();
        (Field::from_values(gx), Field::from_values(gy))
    }

    /// `∫_Ω f dx` with cut-cell weights.
    pub fn integrate_interior(&self, f: &Field) -> Complex64 {
        f.values().iter().zip(&self.quad_weight).map(|(v, w)| v * w).sum()
    }

    /// `∫_{∂Ω} g dS` over the trace's values.
    pub fn integrate_boundary(&self, g: &BoundaryTrace) -> Complex64 {
        g.values().iter().zip(&self.boundary_weight).map(|(v, w)| v * w).sum()
    }

    /// Quadrature-weighted `L²(Ω)` norm.
    pub fn l2_norm(&self, f: &Field) -> f64 {
        f.values()
            .iter()
            .zip(&self.quad_weight)
            .map(|(v, w)| v.norm_sqr() * w)
            .sum::<f64>()
            .sqrt()
    }
}

fn centred(center: usize, minus: Arm, plus: Arm, h: f64) -> Stencil {
    let (a, b) = (minus.frac, plus.frac);
    let denom = a * b * (a + b) * h;
    vec![
        (minus.node, -b * b / denom),
        (center, (b * b - a * a) / denom),
        (plus.node, a * a / denom),
    ]
}

fn merge(mut st: Stencil) -> Stencil {
    st.sort_by_key(|e| e.0);
    let mut out: Stencil = Vec::with_capacity(st.len());
    for (n, w) in st {
        match out.last_mut() {
            Some(last) if last.0 == n => last.1 += w,
            _ => out.push((n, w)),
        }
    }
    out
}

pub(crate) fn apply(st: &Stencil, vals: &[Complex64]) -> Complex64 {
    st.iter().map(|&(n, w)| vals[n] * w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn disk_counts_and_weights() {
        let d = Domain::build(&DomainConfig::disk(64)).unwrap();
        assert!((d.perimeter() - 2.0 * PI).abs() < 1e-12);
        assert!((d.area() - PI).abs() < 1e-10);
        assert_eq!(d.node_count(), d.n_interior() + d.n_outer());
        for k in 0..d.n_outer() {
            let [x, y] = d.outer_coord(k);
            assert!((x * x + y * y - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn quarter_arc_holds_quarter_of_nodes() {
        let cfg = DomainConfig::disk(64)
            .with_arcs(BoundaryArc::new(0.0, PI / 2.0), BoundaryArc::new(0.0, PI / 2.0));
        let d = Domain::build(&cfg).unwrap();
        let frac = d.gamma1().count() as f64 / d.n_outer() as f64;
        assert!((frac - 0.25).abs() < 0.01, "fraction {frac}");
        assert_eq!(d.gamma_tilde().count() + d.gamma1().count(), d.n_outer());
    }

    #[test]
    fn square_bottom_edge_complement() {
        let cfg = DomainConfig::square(32)
            .with_arcs(BoundaryArc::new(0.0, 1.0), BoundaryArc::new(0.0, 1.0));
        let d = Domain::build(&cfg).unwrap();
        assert_eq!(d.n_outer(), 128);
        for k in 0..d.n_outer() {
            let [x, y] = d.outer_coord(k);
            let on_bottom = y == 0.0 && x < 1.0;
            assert_eq!(d.gamma1().contains(k), on_bottom);
            assert_eq!(d.gamma_tilde().contains(k), !on_bottom);
        }
        assert!((d.area() - 1.0).abs() < 1e-14);
        assert!((d.perimeter() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn obstacle_too_close() {
        let cfg = DomainConfig::disk(64).with_obstacle(Some(CircleParams::new([0.8, 0.0], 0.1)));
        match Domain::build(&cfg) {
            Err(Error::ObstacleTooClose { clearance, required }) => {
                assert!((clearance - 0.1).abs() < 1e-12);
                assert!((required - 0.125).abs() < 1e-12);
            }
            other => panic!("expected ObstacleTooClose, got {other:?}"),
        }
    }

    #[test]
    fn obstacle_removes_nodes_and_area() {
        let ob = CircleParams::new([0.1, -0.05], 0.25);
        let plain = Domain::build(&DomainConfig::disk(64)).unwrap();
        let d = Domain::build(&DomainConfig::disk(64).with_obstacle(Some(ob))).unwrap();
        assert!(d.n_interior() < plain.n_interior());
        assert!(d.n_obstacle() > 0);
        let expected = PI - PI * 0.25 * 0.25;
        assert!((d.area() - expected).abs() < 1e-10);
        for node in d.obstacle_range() {
            let p = d.coords()[node];
            let r = ((p[0] - 0.1).powi(2) + (p[1] + 0.05).powi(2)).sqrt();
            assert!((r - 0.25).abs() < 1e-12);
        }
        for node in d.interior_range() {
            let p = d.coords()[node];
            let r = ((p[0] - 0.1).powi(2) + (p[1] + 0.05).powi(2)).sqrt();
            assert!(r > 0.25);
        }
    }

    #[test]
    fn empty_patch_rejected() {
        let cfg = DomainConfig::disk(8).with_arcs(BoundaryArc::new(0.01, 0.011), BoundaryArc::full(Shape::UnitDisk));
        assert!(matches!(Domain::build(&cfg), Err(Error::EmptyPatch("gamma1"))));
    }

    #[test]
    fn zero_length_arc_rejected() {
        let cfg = DomainConfig::disk(8).with_arcs(BoundaryArc::new(1.0, 1.0), BoundaryArc::full(Shape::UnitDisk));
        assert!(matches!(Domain::build(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn normal_derivative_of_linear_and_constant_fields() {
        let d = Domain::build(&DomainConfig::disk(64)).unwrap();
        let all = d.full_boundary();
        let u = Field::from_real_fn(&d, |x, _| x);
        let dn = d.normal_derivative(&u, &all).unwrap();
        for k in 0..d.n_outer() {
            let th = d.boundary_param(k);
            assert!((dn.values()[k] - c(th.cos())).norm() < 1e-10);
        }
        let one = Field::from_real_fn(&d, |_, _| 1.0);
        let dn = d.normal_derivative(&one, &all).unwrap();
        assert!(dn.sup_norm() < 1e-9);
    }

    #[test]
    fn normal_derivative_second_order_on_harmonic_polynomials() {
        // ∂_r (r^k cos kθ) = k cos kθ at r = 1
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let d = Domain::build(&DomainConfig::disk(n)).unwrap();
            let u = Field::from_fn(&d, |x, y| Complex64::new(x, y).powu(5));
            let dn = d.normal_derivative(&u, &d.full_boundary()).unwrap();
            let err = (0..d.n_outer())
                .map(|k| {
                    let th = d.boundary_param(k);
                    (dn.values()[k] - Complex64::from_polar(5.0, 5.0 * th)).norm()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < 5e-3, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn normal_derivative_on_square() {
        let d = Domain::build(&DomainConfig::square(32)).unwrap();
        let u = Field::from_real_fn(&d, |x, y| x * x - y * y);
        let dn = d.normal_derivative(&u, &d.full_boundary()).unwrap();
        for k in 0..d.n_outer() {
            let [x, y] = d.outer_coord(k);
            let nrm = d.boundary_normal(k);
            let exact = 2.0 * x * nrm[0] - 2.0 * y * nrm[1];
            assert!((dn.values()[k].re - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_examples() {
        let d = Domain::build(&DomainConfig::disk(64)).unwrap();
        let one = Field::from_real_fn(&d, |_, _| 1.0);
        assert!((d.integrate_interior(&one).re - PI).abs() / PI < 5e-3);
        let r2 = Field::from_real_fn(&d, |x, y| x * x + y * y);
        let v = d.integrate_interior(&r2).re;
        assert!((v - PI / 2.0).abs() / (PI / 2.0) < 5e-3, "{v}");
        let sq = Domain::build(&DomainConfig::square(32)).unwrap();
        let one = Field::from_real_fn(&sq, |_, _| 1.0);
        assert!((sq.integrate_interior(&one).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_converges_at_least_first_order() {
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let d = Domain::build(&DomainConfig::disk(n)).unwrap();
            let f = Field::from_real_fn(&d, |x, y| (x + 2.0 * y).exp());
            // ∫_disk e^{x+2y} = 2π I₁(√5)/√5
            let exact = 2.0 * PI * bessel_i1(5f64.sqrt()) / 5f64.sqrt();
            errs.push((d.integrate_interior(&f).re - exact).abs());
        }
        assert!(errs[2] < errs[0] / 4.0, "{errs:?}");
    }

    fn bessel_i1(x: f64) -> f64 {
        let mut term = x / 2.0;
        let mut sum = term;
        for k in 1..40 {
            term *= (x / 2.0).powi(2) / (k as f64 * (k + 1) as f64);
            sum += term;
        }
        sum
    }
}
