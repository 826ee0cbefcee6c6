//! Newton solver for `−Δu + q(∇u·∇u) + Σ_{k≥3} V_k u^k/k! = 0` with small
//! Dirichlet data, and a Picard iteration used as an independent check.
//!
//! `(∇u)²` is the bilinear square `∇u·∇u`, not `|∇u|²`; complex data therefore
//! gives a holomorphic dependence of `u` on `f`.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cache::SolveCache;
use crate::domain::{apply, BoundaryTrace, Domain, Field};
use crate::elliptic::{assemble_laplacian, BandScalar, BandedLu, LinearSolveOptions, SparseOperator};
use crate::error::{Error, Result};

/// Analytic coefficient presets evaluated at node coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientPreset {
    Zero,
    Constant { value: f64 },
    Affine { c0: f64, cx: f64, cy: f64 },
    /// `amplitude · exp(−|x − center|² / (2 width²))`
    GaussianBump { amplitude: f64, center: [f64; 2], width: f64 },
    /// `offset + amplitude · cos(k·x + phase)`
    PlaneWave {
        amplitude: f64,
        wavevector: [f64; 2],
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl CoefficientPreset {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            CoefficientPreset::Zero => 0.0,
            CoefficientPreset::Constant { value } => value,
            CoefficientPreset::Affine { c0, cx, cy } => c0 + cx * x + cy * y,
            CoefficientPreset::GaussianBump { amplitude, center, width } => {
                let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            CoefficientPreset::PlaneWave { amplitude, wavevector, phase, offset } => {
                offset + amplitude * (wavevector[0] * x + wavevector[1] * y + phase).cos()
            }
        }
    }

    pub fn sample(&self, d: &Domain) -> Vec<f64> {
        d.coords().iter().map(|p| self.eval(p[0], p[1])).collect()
    }
}

/// `q` and the Taylor coefficients `V_3, …, V_K` of `V(x, ·)` at `z = 0`,
/// stored per node.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearCoefficients {
    q: Vec<f64>,
    /// `v[i]` holds `V_{i+3}`.
    v: Vec<Vec<f64>>,
}

pub const DEFAULT_K_TRUNC: usize = 5;

impl NonlinearCoefficients {
    pub fn zero(n_nodes: usize, k_trunc: usize) -> Self {
        assert!(k_trunc >= 3, "Taylor truncation must be at least 3");
        NonlinearCoefficients { q: vec![0.0; n_nodes], v: vec![vec![0.0; n_nodes]; k_trunc - 2] }
    }

    pub fn new(q: Vec<f64>, v: Vec<Vec<f64>>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidConfig("V must hold at least V_3".into()));
        }
        if v.iter().any(|vk| vk.len() != q.len()) {
            return Err(Error::DomainMismatch { expected: q.len(), got: v.iter().map(Vec::len).find(|&l| l != q.len()).unwrap() });
        }
        if q.iter().chain(v.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("coefficients"));
        }
        Ok(NonlinearCoefficients { q, v })
    }

    /// Samples presets; `v` lists `(k, preset)` pairs with `3 <= k <= k_trunc`.
    pub fn from_presets(d: &Domain, q: &CoefficientPreset, v: &[(usize, CoefficientPreset)], k_trunc: usize) -> Result<Self> {
        let mut c = NonlinearCoefficients::zero(d.node_count(), k_trunc);
        c.q = q.sample(d);
        for (k, p) in v {
            c.set_v(*k, p.sample(d))?;
        }
        Ok(c)
    }

    pub fn n_nodes(&self) -> usize {
        self.q.len()
    }

    pub fn k_trunc(&self) -> usize {
        self.v.len() + 2
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// `V_k` for `3 <= k <= K_trunc`.
    pub fn v(&self, k: usize) -> &[f64] {
        &self.v[k - 3]
    }

    pub fn set_q(&mut self, q: Vec<f64>) -> Result<()> {
        if q.len() != self.q.len() {
            return Err(Error::DomainMismatch { expected: self.q.len(), got: q.len() });
        }
        self.q = q;
        Ok(())
    }

    pub fn set_v(&mut self, k: usize, vk: Vec<f64>) -> Result<()> {
        if k < 3 || k > self.k_trunc() {
            return Err(Error::InvalidConfig(format!("V_{k} outside 3..={}", self.k_trunc())));
        }
        if vk.len() != self.q.len() {
            return Err(Error::DomainMismatch { expected: self.q.len(), got: vk.len() });
        }
        self.v[k - 3] = vk;
        Ok(())
    }

    pub fn with_q(mut self, q: Vec<f64>) -> Result<Self> {
        self.set_q(q)?;
        Ok(self)
    }

    pub fn with_v(mut self, k: usize, vk: Vec<f64>) -> Result<Self> {
        self.set_v(k, vk)?;
        Ok(self)
    }

    pub fn q_sup(&self) -> f64 {
        self.q.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_linear(&self) -> bool {
        self.q.iter().chain(self.v.iter().flatten()).all(|&x| x == 0.0)
    }

    /// Bytes that identify these coefficients exactly, for cache keys.
    pub fn fingerprint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.q.len() * (self.v.len() + 1) + 1));
        out.extend_from_slice(&(self.v.len() as u64).to_le_bytes());
        for x in self.q.iter().chain(self.v.iter().flatten()) {
            out.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    None,
    LineSearch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    HarmonicLift,
    /// Zero at interior nodes with the boundary data attached.
    ZeroInterior,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonOptions {
    /// Residual target relative to `‖f‖∞`. The residual is measured after
    /// scaling each row by the inverse Laplacian diagonal, i.e. in units of `u`.
    pub tol_residual: f64,
    pub max_newton_iters: usize,
    pub damping: Damping,
    pub initial_guess: InitialGuess,
    /// Small-data radius for `‖f‖∞`; larger data only triggers a warning.
    pub delta_data: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol_residual: 1e-10,
            max_newton_iters: 25,
            damping: Damping::LineSearch,
            initial_guess: InitialGuess::HarmonicLift,
            delta_data: 5e-2,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0 && self.tol_residual <= 1e-10) {
            return Err(Error::InvalidConfig(format!("tol_residual must lie in (0, 1e-10], got {}", self.tol_residual)));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::InvalidConfig("max_newton_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a Newton solve.
#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub u: Field,
    pub iterations: usize,
    /// Scaled residual `‖D⁻¹R(u_m)‖∞` before each step and after the last one.
    pub residual_history: Vec<f64>,
    /// Unscaled `‖R(u)‖∞` of the returned iterate.
    pub final_residual: f64,
    /// `‖u‖∞ / ‖f‖∞` (zero for `f = 0`).
    pub c_wp: f64,
}

/// Domain, its Laplacian and a coefficient set: everything needed for
/// forward solves. Cheap to clone; the factorization is shared.
#[derive(Clone, Debug)]
pub struct ForwardModel {
    domain: Arc<Domain>,
    laplacian: Arc<SparseOperator>,
    coeffs: Arc<NonlinearCoefficients>,
    pub newton: NewtonOptions,
    pub linear: LinearSolveOptions,
    /// Optional store consulted by Dirichlet-to-Neumann evaluations.
    pub cache: Option<Arc<dyn SolveCache>>,
    inv_diag: Arc<Vec<f64>>,
    coeff_digest: Arc<OnceLock<[u8; 32]>>,
}

impl ForwardModel {
    pub fn new(domain: Arc<Domain>, coeffs: NonlinearCoefficients) -> Result<Self> {
        let laplacian = Arc::new(assemble_laplacian(&domain));
        Self::with_operator(domain, laplacian, Arc::new(coeffs))
    }

    pub fn with_operator(domain: Arc<Domain>, laplacian: Arc<SparseOperator>, coeffs: Arc<NonlinearCoefficients>) -> Result<Self> {
        if coeffs.n_nodes() != domain.node_count() {
            return Err(Error::DomainMismatch { expected: domain.node_count(), got: coeffs.n_nodes() });
        }
        let inv_diag = laplacian
            .interior_block()
            .outer_iterator()
            .enumerate()
            .map(|(i, r)| 1.0 / r.get(i).copied().unwrap_or(1.0))
            .collect();
        let linear = LinearSolveOptions::for_resolution(domain.config().n_cells_per_side);
        Ok(ForwardModel {
            domain,
            laplacian,
            coeffs,
            newton: NewtonOptions::default(),
            linear,
            cache: None,
            inv_diag: Arc::new(inv_diag),
            coeff_digest: Arc::new(OnceLock::new()),
        })
    }

    /// Same domain and operator with different coefficients.
    pub fn with_coefficients(&self, coeffs: NonlinearCoefficients) -> Result<Self> {
        let mut m = Self::with_operator(self.domain.clone(), self.laplacian.clone(), Arc::new(coeffs))?;
        m.newton = self.newton;
        m.linear = self.linear;
        m.cache = self.cache.clone();
        Ok(m)
    }

    pub fn with_cache(mut self, cache: Option<Arc<dyn SolveCache>>) -> Self {
        self.cache = cache;
        self
    }

    /// Digest identifying domain, coefficients and solver settings.
    pub fn digest(&self) -> [u8; 32] {
        let coeffs = self.coeff_digest.get_or_init(|| {
            crate::cache::model_digest(self.domain.config(), &self.coeffs.fingerprint_bytes(), "")
        });
        let tag = format!("{:?}{:?}", self.newton, self.linear);
        crate::cache::model_digest(self.domain.config(), coeffs, &tag)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn laplacian(&self) -> &SparseOperator {
        &self.laplacian
    }

    pub fn laplacian_arc(&self) -> &Arc<SparseOperator> {
        &self.laplacian
    }

    pub fn coefficients(&self) -> &NonlinearCoefficients {
        &self.coeffs
    }

    /// Nodal values with `f` on `∂Ω`, zero on `∂D` and `interior` inside.
    fn assemble(&self, interior: Vec<Complex64>, f: &BoundaryTrace) -> Field {
        let mut values = interior;
        values.extend_from_slice(f.values());
        values.resize(self.domain.node_count(), Complex64::new(0.0, 0.0));
        Field::from_values(values)
    }

    fn boundary_values(&self, f: &BoundaryTrace) -> Vec<Complex64> {
        let mut b = f.values().to_vec();
        b.resize(self.domain.node_count() - self.domain.n_interior(), Complex64::new(0.0, 0.0));
        b
    }

    /// Nonlinear part `q ∇u·∇u + Σ V_k u^k/k!` at interior nodes.
    pub fn nonlinear_term(&self, u: &Field) -> Vec<Complex64> {
        let (gx, gy) = self.domain.grad_stencils();
        let vals = u.values();
        let c = &self.coeffs;
        (0..self.domain.n_interior())
            .map(|i| {
                let mut s = Complex64::new(0.0, 0.0);
                if c.q[i] != 0.0 {
                    let ux = apply(&gx[i], vals);
                    let uy = apply(&gy[i], vals);
                    s += (ux * ux + uy * uy) * c.q[i];
                }
                s + taylor(&c.v, i, vals[i], 0)
            })
            .collect()
    }

    /// `−Δu + q(∇u·∇u) + Σ V_k u^k/k!` at interior nodes; zero elsewhere.
    pub fn residual(&self, u: &Field) -> Result<Field> {
        self.domain.check_field(u)?;
        let mut r = self.laplacian.apply(u.values());
        for (ri, ni) in r.iter_mut().zip(self.nonlinear_term(u)) {
            *ri += ni;
        }
        r.resize(self.domain.node_count(), Complex64::new(0.0, 0.0));
        Ok(Field::from_values(r))
    }

    fn scaled_norm(&self, r: &[Complex64]) -> f64 {
        r.iter().zip(self.inv_diag.iter()).map(|(v, d)| v.norm() * d).fold(0.0, f64::max)
    }

    /// Rows of `J − A_II`: first-order terms of the nonlinearity at `u`.
    fn jacobian_perturbation(&self, u: &Field) -> Vec<Vec<(usize, Complex64)>> {
        let n_int = self.domain.n_interior();
        let (gx, gy) = self.domain.grad_stencils();
        let vals = u.values();
        let c = &self.coeffs;
        (0..n_int)
            .map(|i| {
                let mut row: Vec<(usize, Complex64)> = Vec::new();
                if c.q[i] != 0.0 {
                    let ux = apply(&gx[i], vals) * (2.0 * c.q[i]);
                    let uy = apply(&gy[i], vals) * (2.0 * c.q[i]);
                    for (st, g) in [(&gx[i], ux), (&gy[i], uy)] {
                        for &(node, w) in st {
                            if node < n_int {
                                row.push((node, g * w));
                            }
                        }
                    }
                }
                let dv = taylor(&c.v, i, vals[i], 1);
                if dv != Complex64::new(0.0, 0.0) {
                    row.push((i, dv));
                }
                row
            })
            .collect()
    }

    fn factor_jacobian<T: BandScalar + From<f64>>(
        &self,
        pert: &[Vec<(usize, Complex64)>],
        lift: impl Fn(Complex64) -> T,
    ) -> Result<BandedLu<T>> {
        let mut j = self.laplacian.band_matrix::<T>();
        for (i, row) in pert.iter().enumerate() {
            for &(node, v) in row {
                j.add(i, node, lift(v));
            }
        }
        j.factor()
    }

    /// Solves `J δ = −r`.
    ///
    /// For small data `J` is a small perturbation `A_II + P` of the Laplacian,
    /// so the fixed point `δ ← A_II⁻¹(−r − Pδ)` on the cached factorization
    /// converges in a few sweeps. A banded factorization of `J` takes over
    /// when the contraction is weak.
    fn newton_step(&self, u: &Field, r: &[Complex64]) -> Result<Vec<Complex64>> {
        let rhs: Vec<Complex64> = r.iter().map(|v| -v).collect();
        let lu = self.laplacian.factorization()?;
        let mut delta = rhs.clone();
        lu.solve_in_place(&mut delta);
        if self.coeffs.is_linear() {
            return Ok(delta);
        }
        let pert = self.jacobian_perturbation(u);
        let sup = |v: &[Complex64]| v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut prev_change = f64::INFINITY;
        for sweep in 0..60 {
            let mut next = rhs.clone();
            for (i, row) in pert.iter().enumerate() {
                for &(node, v) in row {
                    next[i] -= v * delta[node];
                }
            }
            lu.solve_in_place(&mut next);
            let change = next.iter().zip(&delta).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let size = sup(&next);
            delta = next;
            if change <= 1e-15 * size || (change >= 0.5 * prev_change && change <= 1e-12 * size) {
                return Ok(delta);
            }
            if sweep >= 3 && change > 0.3 * prev_change {
                break;
            }
            prev_change = change;
        }
        let mut delta = rhs;
        if u.is_real() {
            self.factor_jacobian::<f64>(&pert, |z| z.re)?.solve_in_place(&mut delta);
        } else {
            self.factor_jacobian::<Complex64>(&pert, |z| z)?.solve_in_place(&mut delta);
        }
        Ok(delta)
    }

    /// Damped Newton iteration for the semilinear Dirichlet problem.
    pub fn solve(&self, f: &BoundaryTrace) -> Result<NewtonReport> {
        let opts = self.newton;
        opts.validate()?;
        let d = &*self.domain;
        if f.len() != d.n_outer() {
            return Err(Error::DomainMismatch { expected: d.n_outer(), got: f.len() });
        }
        let f_sup = f.sup_norm();
        if f_sup > opts.delta_data {
            log::warn!("boundary data sup norm {f_sup:.3e} exceeds small-data radius {:.3e}", opts.delta_data);
        }
        let n_int = d.n_interior();
        let mut u = match opts.initial_guess {
            InitialGuess::HarmonicLift => {
                self.laplacian.solve_with_boundary(&vec![Complex64::new(0.0, 0.0); n_int], &self.boundary_values(f), &self.linear)?
            }
            InitialGuess::ZeroInterior => self.assemble(vec![Complex64::new(0.0, 0.0); n_int], f),
        };
        let tol = opts.tol_residual * f_sup;
        let mut r = self.residual(&u)?.into_values();
        r.truncate(n_int);
        let mut res = self.scaled_norm(&r);
        let mut history = vec![res];
        let mut last_step = f64::INFINITY;
        let mut stalled = 0;
        let mut iterations = 0;
        loop {
            let settled = res == 0.0 || (res <= tol && (iterations == 0 || last_step <= 1e-7 * f_sup || res <= 1e-4 * tol));
            if settled {
                break;
            }
            if iterations >= opts.max_newton_iters {
                return Err(Error::NewtonDiverged { iterations, residual: res });
            }
            let delta = self.newton_step(&u, &r)?;
            let mut t = 1.0;
            let mut trial;
            let mut r_trial;
            let mut res_trial;
            let mut halvings = 0;
            loop {
                let mut vals = u.values().to_vec();
                for (v, dv) in vals.iter_mut().zip(&delta) {
                    *v += dv * t;
                }
                trial = Field::from_values(vals);
                r_trial = self.residual(&trial)?.into_values();
                r_trial.truncate(n_int);
                res_trial = self.scaled_norm(&r_trial);
                if opts.damping == Damping::None || res_trial < res || halvings >= 8 {
                    break;
                }
                if res <= tol && res_trial <= 2.0 * res {
                    // already at the roundoff floor
                    break;
                }
                t *= 0.5;
                halvings += 1;
            }
            if !res_trial.is_finite() {
                return Err(Error::NewtonDiverged { iterations: iterations + 1, residual: res_trial });
            }
            if res_trial >= res && res > tol {
                stalled += 1;
                if stalled >= 3 {
                    return Err(Error::NewtonDiverged { iterations: iterations + 1, residual: res_trial });
                }
            } else {
                stalled = 0;
            }
            last_step = delta.iter().map(|v| v.norm()).fold(0.0, f64::max) * t;
            u = trial;
            r = r_trial;
            res = res_trial;
            history.push(res);
            iterations += 1;
            if res <= tol && last_step <= 1e-14 * f_sup.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        if !u.is_finite() {
            return Err(Error::NonFinite("solve_semilinear"));
        }
        let final_residual = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let c_wp = if f_sup > 0.0 { u.sup_norm() / f_sup } else { 0.0 };
        Ok(NewtonReport { u, iterations, residual_history: history, final_residual, c_wp })
    }

    /// Fixed-point iteration `−Δu_{m+1} = −N(u_m)`, `u_{m+1} = f` on `∂Ω`,
    /// run until successive iterates agree to `tol·‖f‖∞`.
    pub fn picard(&self, f: &BoundaryTrace, tol: f64, max_iter: usize) -> Result<Field> {
        let d = &*self.domain;
        let bnd = self.boundary_values(f);
        let n_int = d.n_interior();
        let mut u = self.laplacian.solve_with_boundary(&vec![Complex64::new(0.0, 0.0); n_int], &bnd, &self.linear)?;
        let scale = f.sup_norm();
        for _ in 0..max_iter {
            let rhs: Vec<Complex64> = self.nonlinear_term(&u).into_iter().map(|v| -v).collect();
            let next = self.laplacian.solve_with_boundary(&rhs, &bnd, &self.linear)?;
            let change = next.sub(&u).sup_norm();
            u = next;
            if !u.is_finite() {
                return Err(Error::NonFinite("picard"));
            }
            if change <= tol * scale {
                return Ok(u);
            }
        }
        Err(Error::NoConvergence { iterations: max_iter, residual: f64::NAN })
    }
}

/// `Σ_k V_k z^{k−p}/(k−p)!` at node `i`: the `p`-th `z`-derivative of the
/// truncated Taylor series.
fn taylor(v: &[Vec<f64>], i: usize, z: Complex64, p: usize) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for (idx, vk) in v.iter().enumerate() {
        let k = idx + 3;
        if vk[i] != 0.0 {
            let e = k - p;
            let fact: f64 = (1..=e).map(|j| j as f64).product();
            s += z.powu(e as u32) * (vk[i] / fact);
        }
    }
    s
}

/// `−Δu + q(∇u·∇u) + Σ V_k u^k/k!` at interior nodes.
pub fn semilinear_residual(model: &ForwardModel, u: &Field) -> Result<Field> {
    model.residual(u)
}

pub fn solve_semilinear(model: &ForwardModel, f: &BoundaryTrace) -> Result<NewtonReport> {
    model.solve(f)
}

/// Polynomial fit of `ε ↦ u(ε f_dir)` at one node.
#[derive(Clone, Debug)]
pub struct HolomorphyReport {
    pub degree: usize,
    /// Taylor coefficients `c_0, …, c_P` of the fit.
    pub coefficients: Vec<Complex64>,
    pub max_fit_residual: f64,
    /// Largest `|u|` at the probe node over the samples.
    pub solution_scale: f64,
}

/// Solves at every `ε` sample and fits a degree-`degree` complex polynomial
/// in `ε` to the value at `probe_node`.
pub fn holomorphy_probe(
    model: &ForwardModel,
    f_dir: &BoundaryTrace,
    eps_samples: &[Complex64],
    degree: usize,
    probe_node: usize,
) -> Result<HolomorphyReport> {
    if eps_samples.len() < degree + 1 {
        return Err(Error::InvalidConfig(format!("{} samples cannot determine a degree-{degree} fit", eps_samples.len())));
    }
    let values = eps_samples
        .iter()
        .map(|&e| Ok(model.solve(&f_dir.scaled(e))?.u.values()[probe_node]))
        .collect::<Result<Vec<_>>>()?;
    Ok(fit_polynomial(eps_samples, &values, degree))
}

/// Least-squares complex polynomial fit, coordinates scaled by `max |ε|`.
pub fn fit_polynomial(eps: &[Complex64], values: &[Complex64], degree: usize) -> HolomorphyReport {
    let s = eps.iter().map(|e| e.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(eps.len(), degree + 1, |i, j| (eps[i] / s).powu(j as u32));
    let b = DVector::from_column_slice(values);
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&b, 1e-14).expect("svd solve with computed factors");
    let fit = &a * &c;
    let max_fit_residual = fit.iter().zip(values).map(|(f, v)| (f - v).norm()).fold(0.0, f64::max);
    let coefficients = c.iter().enumerate().map(|(j, cj)| cj / s.powi(j as i32)).collect();
    let solution_scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    HolomorphyReport { degree, coefficients, max_fit_residual, solution_scale }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainConfig;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn disk_model(n: usize, q: f64, v3: f64) -> ForwardModel {
        let d = Arc::new(Domain::build(&DomainConfig::disk(n)).unwrap());
        let coeffs = NonlinearCoefficients::zero(d.node_count(), DEFAULT_K_TRUNC)
            .with_q(vec![q; d.node_count()])
            .unwrap()
            .with_v(3, vec![v3; d.node_count()])
            .unwrap();
        ForwardModel::new(d, coeffs).unwrap()
    }

    fn cos_trace(d: &Domain, amp: f64) -> BoundaryTrace {
        BoundaryTrace::from_fn(d, &d.full_boundary(), |s, _, _| c(amp * s.cos()))
    }

    #[test]
    fn residual_of_zero_and_linear_field() {
        let m = disk_model(32, 1.0, 1.0);
        let d = m.domain();
        let r = m.residual(&Field::zeros(d.node_count())).unwrap();
        assert_eq!(r.sup_norm(), 0.0);
        let m = disk_model(32, 1.0, 0.0);
        let u = Field::from_real_fn(m.domain(), |x, _| x);
        let r = m.residual(&u).unwrap();
        for v in &r.values()[m.domain().interior_range()] {
            assert!((v - c(1.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let m = disk_model(32, 1.0, 1.0);
        let rep = m.solve(&BoundaryTrace::zeros(m.domain().full_boundary())).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.u.values().iter().all(|v| *v == c(0.0)));
    }

    #[test]
    fn linear_problem_is_the_harmonic_lift() {
        let m = disk_model(32, 0.0, 0.0);
        let f = cos_trace(m.domain(), 0.3);
        let rep = m.solve(&f).unwrap();
        assert!(rep.iterations <= 1);
        let mut zero_guess = m.clone();
        zero_guess.newton.initial_guess = InitialGuess::ZeroInterior;
        let rep2 = zero_guess.solve(&f).unwrap();
        assert!(rep2.iterations <= 2);
        assert!(rep.u.sub(&rep2.u).sup_norm() < 1e-13);
    }

    #[test]
    fn newton_matches_picard_and_converges_quadratically() {
        let m = disk_model(32, 1.0, 1.0);
        let f = cos_trace(m.domain(), 1e-2);
        let rep = m.solve(&f).unwrap();
        let last = *rep.residual_history.last().unwrap();
        assert!(last <= 1e-12, "{:?}", rep.residual_history);
        let picard = m.picard(&f, 1e-14, 200).unwrap();
        assert!(rep.u.sub(&picard).sup_norm() < 1e-12);
        let lift = m.laplacian().solve_with_boundary(&vec![c(0.0); m.domain().n_interior()], f.values(), &m.linear).unwrap();
        let dev = rep.u.sub(&lift).sup_norm();
        assert!(dev > 1e-6 && dev < 1e-3, "{dev}");
    }

    #[test]
    fn holomorphic_dependence_on_data() {
        let m = disk_model(16, 1.0, 1.0);
        let f = cos_trace(m.domain(), 1.0);
        let probe = m.domain().n_interior() / 3;
        let real: Vec<Complex64> = (-3..=3).map(|k| c(k as f64 * 3e-3)).collect();
        let imag: Vec<Complex64> = real.iter().map(|e| e * Complex64::i()).collect();
        let fr = holomorphy_probe(&m, &f, &real, 4, probe).unwrap();
        let fi = holomorphy_probe(&m, &f, &imag, 4, probe).unwrap();
        assert!(fr.max_fit_residual <= 1e-8 * fr.solution_scale);
        for j in 0..3 {
            let scale = fr.coefficients[j].norm().max(1e-12);
            assert!((fr.coefficients[j] - fi.coefficients[j]).norm() <= 1e-4 * scale.max(fr.coefficients[1].norm()), "coefficient {j}");
        }
    }

    #[test]
    fn diverges_for_large_data() {
        let m = disk_model(16, 1.0, 0.0);
        let f = cos_trace(m.domain(), 200.0);
        match m.solve(&f) {
            Err(Error::NewtonDiverged { .. }) => {}
            other => panic!("expected divergence, got {:?}", other.map(|r| r.residual_history)),
        }
    }

    #[test]
    fn preconditioned_step_matches_factorized_jacobian() {
        let m = disk_model(32, 1.0, 1.0);
        let d = m.domain();
        let u = Field::from_real_fn(d, |x, y| 0.02 * (x * x - y * y) + 0.01 * x);
        let r: Vec<Complex64> = m.residual(&u).unwrap().values()[..d.n_interior()].to_vec();
        let fast = m.newton_step(&u, &r).unwrap();
        let pert = m.jacobian_perturbation(&u);
        let mut exact: Vec<Complex64> = r.iter().map(|v| -v).collect();
        m.factor_jacobian::<f64>(&pert, |z| z.re).unwrap().solve_in_place(&mut exact);
        let scale = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let diff = fast.iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-13 * scale, "{diff} vs {scale}");
    }

    #[test]
    fn presets_evaluate() {
        let g = CoefficientPreset::GaussianBump { amplitude: 2.0, center: [0.1, 0.0], width: 0.5 };
        assert!((g.eval(0.1, 0.0) - 2.0).abs() < 1e-15);
        assert!((g.eval(0.6, 0.0) - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        let p = CoefficientPreset::PlaneWave { amplitude: 1.0, wavevector: [1.0, 0.0], phase: 0.0, offset: 0.5 };
        assert!((p.eval(0.0, 3.0) - 1.5).abs() < 1e-15);
    }
}
