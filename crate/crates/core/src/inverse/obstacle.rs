//! Recovery of a circular obstacle from first linearizations.
//!
//! The first linearization of the obstacle problem is the DtN map of the
//! Laplacian with `v = 0` on `∂D`, so every candidate circle costs one
//! factorization plus one solve per input. The misfit is minimized by a grid
//! scan followed by Nelder–Mead.

use std::sync::atomic::{AtomicU64, Ordering};

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryTrace, CircleParams, Domain, DomainConfig};
use crate::elliptic::{assemble_laplacian, harmonic_lift, LinearSolveOptions};
use crate::error::{Error, Result};
use crate::linearize::LinearizedDtNRecord;

/// Cost assigned to circles that do not fit in the domain.
const INVALID_COST: f64 = 1e300;

/// Box of admissible circles and the search budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleSearch {
    pub center_min: [f64; 2],
    pub center_max: [f64; 2],
    pub radius_min: f64,
    pub radius_max: f64,
    /// Scan points per parameter `(cx, cy, r)`.
    pub grid: [usize; 3],
    pub max_iters: u64,
}

impl Default for ObstacleSearch {
    fn default() -> Self {
        ObstacleSearch {
            center_min: [-0.3, -0.3],
            center_max: [0.3, 0.3],
            radius_min: 0.1,
            radius_max: 0.4,
            grid: [5, 5, 5],
            max_iters: 150,
        }
    }
}

impl ObstacleSearch {
    fn validate(&self) -> Result<()> {
        let ok = (0..2).all(|i| self.center_min[i] <= self.center_max[i])
            && 0.0 < self.radius_min
            && self.radius_min <= self.radius_max
            && self.grid.iter().all(|&g| g >= 1);
        if !ok {
            return Err(Error::InvalidConfig(format!("inconsistent obstacle search box {self:?}")));
        }
        Ok(())
    }

    fn lower(&self) -> [f64; 3] {
        [self.center_min[0], self.center_min[1], self.radius_min]
    }

    fn upper(&self) -> [f64; 3] {
        [self.center_max[0], self.center_max[1], self.radius_max]
    }

    fn clamp(&self, p: &[f64]) -> ([f64; 3], f64) {
        let (lo, hi) = (self.lower(), self.upper());
        let mut c = [0.0; 3];
        let mut dist2 = 0.0;
        for i in 0..3 {
            c[i] = p[i].clamp(lo[i], hi[i]);
            dist2 += (p[i] - c[i]).powi(2);
        }
        (c, dist2)
    }
}

/// First-linearization response `∂_ν v|_{Γ₂}` of each input for a given
/// obstacle (or none), on the grid of `base`.
pub fn obstacle_response(
    base: &DomainConfig,
    obstacle: Option<CircleParams>,
    inputs: &[BoundaryTrace],
    opts: &LinearSolveOptions,
) -> Result<Vec<BoundaryTrace>> {
    let d = Domain::build(&base.clone().with_obstacle(obstacle))?;
    let a = assemble_laplacian(&d);
    inputs
        .iter()
        .map(|f| {
            if f.len() != d.n_outer() {
                return Err(Error::DomainMismatch { expected: d.n_outer(), got: f.len() });
            }
            let v = harmonic_lift(&a, f, opts)?;
            d.normal_derivative(&v, d.gamma2())
        })
        .collect()
}

/// `Σᵢ ‖model − data‖²_{L²(Γ₂)}`; the boundary quadrature does not depend on
/// the obstacle.
pub fn obstacle_misfit(
    base: &DomainConfig,
    boundary_weights: &[f64],
    obstacle: Option<CircleParams>,
    records: &[LinearizedDtNRecord],
    opts: &LinearSolveOptions,
) -> Result<f64> {
    let inputs: Vec<BoundaryTrace> = records.iter().map(|r| r.inputs[0].clone()).collect();
    let model = obstacle_response(base, obstacle, &inputs, opts)?;
    let mut total = 0.0;
    for (m, r) in model.iter().zip(records) {
        for k in r.output.mask().indices() {
            total += (m.values()[k] - r.output.values()[k]).norm_sqr() * boundary_weights[k];
        }
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct ObstacleReport {
    pub circle: CircleParams,
    pub misfit: f64,
    /// Scan points `([cx, cy, r], misfit)`.
    pub landscape: Vec<([f64; 3], f64)>,
    pub evaluations: u64,
    /// Misfit attributable to the data error estimates.
    pub noise_misfit: f64,
    pub non_identifiable: bool,
    pub reason: Option<String>,
}

struct Objective<'a> {
    base: &'a DomainConfig,
    weights: &'a [f64],
    records: &'a [LinearizedDtNRecord],
    search: ObstacleSearch,
    opts: LinearSolveOptions,
    penalty: f64,
    count: AtomicU64,
}

impl Objective<'_> {
    fn eval(&self, p: [f64; 3]) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        let circle = CircleParams::new([p[0], p[1]], p[2]);
        obstacle_misfit(self.base, self.weights, Some(circle), self.records, &self.opts).unwrap_or(INVALID_COST)
    }
}

impl CostFunction for &Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, ArgminError> {
        // out-of-box points are pulled back and penalized
        let (c, dist2) = self.search.clamp(p);
        Ok(self.eval(c) + self.penalty * dist2)
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Fits a circle to first-linearization records measured with an unknown
/// obstacle. `base` is the measurement configuration without obstacle.
pub fn recover_obstacle(
    base: &DomainConfig,
    records: &[LinearizedDtNRecord],
    search: &ObstacleSearch,
    opts: &LinearSolveOptions,
) -> Result<ObstacleReport> {
    search.validate()?;
    if records.is_empty() || records.iter().any(|r| r.order() != 1) {
        return Err(Error::InvalidConfig("obstacle recovery needs first-linearization records".into()));
    }
    let probe = Domain::build(base)?;
    let weights = probe.boundary_weights().to_vec();
    let gamma2_len: f64 = probe.gamma2().indices().map(|k| weights[k]).sum();
    let noise_misfit: f64 = records.iter().map(|r| r.total_error().powi(2) * gamma2_len).sum();

    let (lo, hi) = (search.lower(), search.upper());
    let axes: Vec<Vec<f64>> = (0..3).map(|i| axis(lo[i], hi[i], search.grid[i])).collect();
    let mut points = Vec::new();
    for &cx in &axes[0] {
        for &cy in &axes[1] {
            for &r in &axes[2] {
                points.push([cx, cy, r]);
            }
        }
    }
    let mut objective = Objective { base, weights: &weights, records, search: *search, opts: *opts, penalty: 0.0, count: AtomicU64::new(0) };
    let landscape: Vec<([f64; 3], f64)> = points.par_iter().map(|p| (*p, objective.eval(*p))).collect();
    let finite: Vec<f64> = landscape.iter().map(|x| x.1).filter(|c| *c < INVALID_COST).collect();
    if finite.is_empty() {
        return Err(Error::InvalidConfig("no admissible circle in the obstacle search box".into()));
    }
    let max_cost = finite.iter().copied().fold(0.0, f64::max);
    let min_cost = finite.iter().copied().fold(f64::INFINITY, f64::min);
    objective.penalty = 1e3 * (max_cost + 1.0);
    let start = landscape.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;

    // initial simplex: the best scan point plus half a grid step per axis
    let step: Vec<f64> = (0..3)
        .map(|i| if search.grid[i] > 1 { 0.5 * (hi[i] - lo[i]) / (search.grid[i] - 1) as f64 } else { 0.05 * (hi[i] - lo[i]).max(1e-2) })
        .collect();
    let mut simplex = vec![start.to_vec()];
    for i in 0..3 {
        let mut p = start.to_vec();
        p[i] += if p[i] + step[i] <= hi[i] { step[i] } else { -step[i] };
        simplex.push(p);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-14 * (max_cost + f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let res = Executor::new(&objective, solver)
        .configure(|s| s.max_iters(search.max_iters))
        .run()
        .map_err(|e| Error::InvalidConfig(format!("obstacle optimizer: {e}")))?;
    let state = res.state();
    let best = state.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
    let (best, _) = search.clamp(&best);
    let misfit = state.get_best_cost().min(min_cost);
    let best = if state.get_best_cost() <= min_cost { best } else { start };
    let evaluations = objective.count.load(Ordering::Relaxed);
    info!("obstacle search: {best:?} misfit {misfit:.3e} after {evaluations} evaluations");

    // the search box cannot express "no obstacle", so compare with it directly
    let empty = obstacle_misfit(base, &weights, None, records, opts)?;
    let mut reason = None;
    if empty <= misfit + noise_misfit {
        reason = Some(format!("data fit without obstacle ({empty:.3e}) at least as well as any circle ({misfit:.3e})"));
    } else if max_cost - min_cost <= 10.0 * noise_misfit {
        reason = Some(format!("misfit range {:.3e} below noise level {:.3e}", max_cost - min_cost, noise_misfit));
    } else if best[2] <= search.radius_min + 0.02 * (search.radius_max - search.radius_min) {
        reason = Some(format!("optimum at the radius lower bound {}", search.radius_min));
    }
    if let Some(r) = &reason {
        warn!("obstacle not identifiable: {r}");
    }
    Ok(ObstacleReport {
        circle: CircleParams::new([best[0], best[1]], best[2]),
        misfit,
        landscape,
        evaluations,
        noise_misfit,
        non_identifiable: reason.is_some(),
        reason,
    })
}
