//! Least-squares recovery of `q` and of the Taylor coefficients `V_m` from
//! moment data.

use std::collections::HashMap;
use std::f64::consts::PI;

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;

use super::bank::TestBank;
use super::lsq::{tikhonov_solve, LsqReport};
use super::moments::MomentRecord;
use super::{BasisKind, ReconstructionOptions};
use crate::domain::{Domain, Shape};
use crate::error::{Error, Result};
use crate::linearize::chain_top_source;
use crate::semilinear::ForwardModel;

/// Known-coefficient contribution larger than this multiple of the residual
/// signal triggers a propagation warning.
const PROPAGATION_RATIO: f64 = 10.0;

/// Discretization of the unknown coefficient.
#[derive(Clone, Debug, PartialEq)]
pub enum Basis {
    /// One value per node carrying quadrature weight.
    GridNodal { nodes: Vec<usize>, n_nodes: usize },
    /// `cos(aπ(x−x₀)/L) cos(bπ(y−y₀)/L)`, `0 ≤ a, b < modes`, on the
    /// bounding box of the domain.
    Fourier { modes: usize, origin: [f64; 2], length: f64 },
}

impl Basis {
    pub fn new(d: &Domain, opts: &ReconstructionOptions) -> Result<Self> {
        Ok(match opts.basis {
            BasisKind::GridNodal => {
                let w = d.quadrature_weights();
                Basis::GridNodal { nodes: (0..d.node_count()).filter(|&i| w[i] > 0.0).collect(), n_nodes: d.node_count() }
            }
            BasisKind::FourierModes => {
                if opts.fourier_modes == 0 {
                    return Err(Error::InvalidConfig("fourier_modes must be positive".into()));
                }
                let (origin, length) = match d.shape() {
                    Shape::UnitDisk => ([-1.0, -1.0], 2.0),
                    Shape::UnitSquare => ([0.0, 0.0], 1.0),
                };
                Basis::Fourier { modes: opts.fourier_modes, origin, length }
            }
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Basis::GridNodal { nodes, .. } => nodes.len(),
            Basis::Fourier { modes, .. } => modes * modes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node-by-basis matrix of basis values (not formed for the nodal basis).
    fn values(&self, d: &Domain) -> Option<DMatrix<f64>> {
        match self {
            Basis::GridNodal { .. } => None,
            Basis::Fourier { modes, origin, length } => {
                let p = d.coords();
                Some(DMatrix::from_fn(p.len(), modes * modes, |i, j| {
                    let (a, b) = ((j / modes) as f64, (j % modes) as f64);
                    let x = (p[i][0] - origin[0]) / length;
                    let y = (p[i][1] - origin[1]) / length;
                    (a * PI * x).cos() * (b * PI * y).cos()
                }))
            }
        }
    }

    /// Penalty weights `(1 + |k|²)^{s/2}` of the coefficients, `k` the
    /// wavevector of a cosine mode.
    fn penalty(&self, smoothness: f64) -> Vec<f64> {
        match self {
            Basis::GridNodal { nodes, .. } => vec![1.0; nodes.len()],
            Basis::Fourier { modes, length, .. } => (0..modes * modes)
                .map(|j| {
                    let (a, b) = ((j / modes) as f64, (j % modes) as f64);
                    let k2 = (PI / length).powi(2) * (a * a + b * b);
                    (1.0 + k2).powf(0.5 * smoothness)
                })
                .collect(),
        }
    }

    /// Nodal values of `Σ c_j φ_j`.
    fn synthesize(&self, phi: &Option<DMatrix<f64>>, c: &[f64]) -> Vec<f64> {
        match (self, phi) {
            (Basis::GridNodal { nodes, n_nodes }, _) => {
                let mut out = vec![0.0; *n_nodes];
                for (&i, v) in nodes.iter().zip(c) {
                    out[i] = *v;
                }
                out
            }
            (Basis::Fourier { .. }, Some(phi)) => (phi * nalgebra::DVector::from_column_slice(c)).iter().copied().collect(),
            (Basis::Fourier { .. }, None) => unreachable!("cosine basis is always tabulated"),
        }
    }

    /// Row of the design matrix, `Σₙ φ_j(xₙ) gₙ` for an integrand `g` that
    /// already carries its measure.
    fn project(&self, phi: &Option<DMatrix<f64>>, g: &[Complex64]) -> Vec<Complex64> {
        match self {
            Basis::GridNodal { nodes, .. } => nodes.iter().map(|&i| g[i]).collect(),
            Basis::Fourier { .. } => {
                let phi = phi.as_ref().expect("cosine basis is always tabulated");
                let mut row = vec![Complex64::new(0.0, 0.0); phi.ncols()];
                for (i, gi) in g.iter().enumerate() {
                    if *gi == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for (j, r) in row.iter_mut().enumerate() {
                        *r += gi * phi[(i, j)];
                    }
                }
                row
            }
        }
    }
}

/// A reconstructed coefficient with its diagnostics.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Nodal values of the reconstruction.
    pub values: Vec<f64>,
    pub lsq: LsqReport,
    pub n_moments: usize,
    /// L² norm of the reconstruction's response to the moment error
    /// estimates (root-sum-square over moments).
    pub noise_floor: f64,
    pub relative_l2_error: Option<f64>,
    pub l2_norm: f64,
    /// Set when the subtracted known-coefficient term dominates the data.
    pub propagation_warning: bool,
}

fn solve_moments(
    d: &Domain,
    basis: &Basis,
    phi: &Option<DMatrix<f64>>,
    rows_c: Vec<Vec<Complex64>>,
    data: Vec<Complex64>,
    errors: Vec<f64>,
    opts: &ReconstructionOptions,
    truth: Option<&[f64]>,
) -> Result<Reconstruction> {
    let n_moments = rows_c.len();
    if matches!(basis, Basis::Fourier { .. }) && 2 * n_moments < 3 * basis.len() {
        return Err(Error::TooFewMoments { got: n_moments, needed: (3 * basis.len()).div_ceil(2) });
    }
    // complex identities split into real and imaginary equations; the
    // imaginary ones are dropped when the row is real
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let (mut rhs, mut sigma) = (Vec::new(), Vec::new());
    for ((row, b), e) in rows_c.iter().zip(&data).zip(&errors) {
        rows.push(row.iter().map(|z| z.re).collect());
        rhs.push(b.re);
        sigma.push(*e);
        if row.iter().any(|z| z.im != 0.0) {
            rows.push(row.iter().map(|z| z.im).collect());
            rhs.push(b.im);
            sigma.push(*e);
        }
    }
    let n = basis.len();
    if !(opts.smoothness >= 0.0) {
        return Err(Error::InvalidConfig(format!("smoothness must be >= 0, got {}", opts.smoothness)));
    }
    // generalized Tikhonov ‖Lc‖² with diagonal L, solved for c̃ = Lc
    let pen = basis.penalty(opts.smoothness);
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j] / pen[j]);
    // rows are equilibrated, and rows whose error estimate is large relative to
    // the typical signal are further down-weighted
    let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let total_b: f64 = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
    let total_a: f64 = norms.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = if total_a > 0.0 { total_b / total_a } else { 0.0 };
    let weights: Vec<f64> = norms
        .iter()
        .zip(&sigma)
        .map(|(nr, s)| {
            let e = if scale > 0.0 { s / scale } else { 0.0 };
            let denom = (nr * nr + e * e).sqrt();
            if denom > 0.0 {
                1.0 / denom
            } else {
                0.0
            }
        })
        .collect();
    let mut lsq = tikhonov_solve(&a, &rhs, &weights, opts.tikhonov_lambda, opts.rank_threshold)?;
    for (j, mut row) in lsq.pinv.row_iter_mut().enumerate() {
        row /= pen[j];
        lsq.coefficients[j] /= pen[j];
    }
    if lsq.rank_deficient {
        warn!("moment system is rank deficient (condition {:.3e})", lsq.condition_estimate);
    }
    let values = basis.synthesize(phi, &lsq.coefficients);
    let w = d.quadrature_weights();
    let l2 = |v: &[f64]| v.iter().zip(w).map(|(x, w)| x * x * w).sum::<f64>().sqrt();
    // response of the reconstruction to the moment errors, one column each
    let mut noise_sq = 0.0;
    for (k, s) in sigma.iter().enumerate() {
        if *s == 0.0 {
            continue;
        }
        let col: Vec<f64> = lsq.pinv.column(k).iter().map(|v| v * s).collect();
        let field = basis.synthesize(phi, &col);
        noise_sq += field.iter().zip(w).map(|(x, w)| x * x * w).sum::<f64>();
    }
    let l2_norm = l2(&values);
    let relative_l2_error = truth.map(|t| {
        let diff: Vec<f64> = values.iter().zip(t).map(|(a, b)| a - b).collect();
        let nt = l2(t);
        if nt > 0.0 {
            l2(&diff) / nt
        } else {
            l2(&diff)
        }
    });
    Ok(Reconstruction {
        values,
        lsq,
        n_moments,
        noise_floor: noise_sq.sqrt(),
        relative_l2_error,
        l2_norm,
        propagation_warning: false,
    })
}

/// Recovers `q` from moments `∫ q (∇vᵢ·∇vⱼ) v_k` with ids `[i, j, k]`,
/// `i, j` indexing `inputs` and `k` indexing `tests`.
pub fn recover_q(
    d: &Domain,
    inputs: &TestBank,
    tests: &TestBank,
    moments: &[MomentRecord],
    opts: &ReconstructionOptions,
    truth: Option<&[f64]>,
) -> Result<Reconstruction> {
    let basis = Basis::new(d, opts)?;
    let phi = basis.values(d);
    let mut rows = Vec::with_capacity(moments.len());
    for mo in moments {
        let [i, j, k] = mo.ids[..] else {
            return Err(Error::InvalidConfig(format!("q-moment needs 3 ids, got {}", mo.ids.len())));
        };
        if i >= inputs.len() || j >= inputs.len() || k >= tests.len() {
            return Err(Error::InvalidConfig(format!("moment ids {:?} out of bank range", mo.ids)));
        }
        let (gi, gj, mk) = (inputs.gradient(i), inputs.gradient(j), tests.measure(k, opts.row_model));
        let g: Vec<Complex64> = (0..d.node_count())
            .map(|n| (gi.0.values()[n] * gj.0.values()[n] + gi.1.values()[n] * gj.1.values()[n]) * mk[n])
            .collect();
        rows.push(basis.project(&phi, &g));
    }
    let data = moments.iter().map(|m| m.value).collect();
    let errors = moments.iter().map(|m| m.error_estimate).collect();
    solve_moments(d, &basis, &phi, rows, data, errors, opts, truth)
}

/// Recovers `V_m` from boundary moments `∫_{Γ₂} ∂_ν w v_{m+1}` of `m`-th
/// linearizations, ids `[l₁, …, l_m, k]` into `inputs` and `tests`. `known` carries the already
/// recovered `q, V₃, …, V_{m−1}` (its `V_m` is ignored); their contribution
/// is computed by direct linearized solves and subtracted.
pub fn recover_vm(
    m: usize,
    known: &ForwardModel,
    inputs: &TestBank,
    tests: &TestBank,
    moments: &[MomentRecord],
    opts: &ReconstructionOptions,
    truth: Option<&[f64]>,
) -> Result<Reconstruction> {
    if !(3..=known.coefficients().k_trunc()).contains(&m) {
        return Err(Error::UnsupportedOrder(m));
    }
    let d = known.domain();
    let known = known.with_coefficients(known.coefficients().clone().with_v(m, vec![0.0; d.node_count()])?)?;
    let basis = Basis::new(d, opts)?;
    let phi = basis.values(d);
    let mut sources: HashMap<Vec<usize>, crate::domain::Field> = HashMap::new();
    let (mut rows, mut data) = (Vec::with_capacity(moments.len()), Vec::with_capacity(moments.len()));
    let (mut h_total, mut signal_total) = (0.0, 0.0);
    for mo in moments {
        if mo.ids.len() != m + 1 {
            return Err(Error::InvalidConfig(format!("order-{m} moment needs {} ids, got {}", m + 1, mo.ids.len())));
        }
        let (ids, k) = (&mo.ids[..m], mo.ids[m]);
        if ids.iter().any(|&l| l >= inputs.len()) || k >= tests.len() {
            return Err(Error::InvalidConfig(format!("moment ids {:?} out of bank range", mo.ids)));
        }
        let mut key = ids.to_vec();
        key.sort_unstable();
        if !sources.contains_key(&key) {
            let traces: Vec<_> = key.iter().map(|&l| inputs.trace(d, l)).collect();
            sources.insert(key.clone(), chain_top_source(&known, &traces)?);
        }
        let r = &sources[&key];
        let mk = tests.measure(k, opts.row_model);
        let h: Complex64 = (0..d.node_count()).map(|n| r.values()[n] * mk[n]).sum();
        let g: Vec<Complex64> = (0..d.node_count())
            .map(|n| ids.iter().map(|&l| inputs.field(l).values()[n]).product::<Complex64>() * mk[n])
            .collect();
        rows.push(basis.project(&phi, &g));
        let b = mo.value - h;
        h_total += h.norm();
        signal_total += b.norm();
        data.push(b);
    }
    let errors = moments.iter().map(|m| m.error_estimate).collect();
    let mut rec = solve_moments(d, &basis, &phi, rows, data, errors, opts, truth)?;
    if h_total > PROPAGATION_RATIO * signal_total {
        warn!("order-{m} data dominated by lower-order terms ({h_total:.3e} vs {signal_total:.3e})");
        rec.propagation_warning = true;
    }
    Ok(rec)
}
