//! Projection of a target onto span{∇uᵢ·∇uⱼ} for growing families of
//! harmonic functions that vanish on the inaccessible boundary.

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::domain::{BoundaryMask, BoundaryTrace, Domain, Field};
use crate::elliptic::{harmonic_lift, LinearSolveOptions, SparseOperator};
use crate::error::{Error, Result};
use crate::harmonic::{cgo_corrected, harmonic_polynomial, IsotropicDirection, Parity};

/// Products whose new component is below this fraction of their norm are
/// treated as linearly dependent.
const DEPENDENCE_TOL: f64 = 1e-10;

/// Harmonic functions vanishing on `gamma_tilde`: `Re zᵏ`, `Im zᵏ` for
/// `k = 1, 2, …` minus their discrete harmonic corrections, with one corrected
/// exponential from `cgo_dirs` inserted after each degree while any remain.
pub fn density_basis(
    d: &Domain,
    a: &SparseOperator,
    gamma_tilde: &BoundaryMask,
    n_max: usize,
    cgo_dirs: &[IsotropicDirection],
    opts: &LinearSolveOptions,
) -> Result<Vec<Field>> {
    let mut out = Vec::with_capacity(n_max);
    let mut dirs = cgo_dirs.iter();
    let mut degree = 1;
    while out.len() < n_max {
        for parity in [Parity::Re, Parity::Im] {
            if out.len() == n_max {
                break;
            }
            let mut u = harmonic_polynomial(d, degree, parity).field;
            if gamma_tilde.count() > 0 {
                let vals: Vec<Complex64> = d.trace(&u).values().iter().map(|v| -v).collect();
                let w = harmonic_lift(a, &BoundaryTrace::new(vals, gamma_tilde.clone()), opts)?;
                u.axpy(Complex64::new(1.0, 0.0), &w);
                for k in gamma_tilde.indices() {
                    u.values_mut()[d.n_interior() + k] = Complex64::new(0.0, 0.0);
                }
            }
            out.push(u);
        }
        if out.len() < n_max {
            if let Some(dir) = dirs.next() {
                out.push(cgo_corrected(d, a, dir, gamma_tilde, opts)?.field);
            }
        }
        degree += 1;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DensityReport {
    pub n_list: Vec<usize>,
    /// `‖target − P_N target‖ / ‖target‖` in weighted L².
    pub residuals: Vec<f64>,
    /// Condition number of the Gram matrix of the products at each `N`.
    pub gram_condition: Vec<f64>,
    pub ill_conditioned: Vec<bool>,
    /// Number of independent products retained at each `N`.
    pub rank: Vec<usize>,
    /// Projection of the target at the largest `N`.
    pub approximation: Field,
}

fn inner(w: &[f64], a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x.conj() * y * *w).sum()
}

fn gram_condition(w: &[f64], products: &[Vec<Complex64>]) -> f64 {
    let n = products.len();
    if n == 0 {
        return 1.0;
    }
    let g = DMatrix::from_fn(n, n, |i, j| inner(w, &products[i], &products[j]));
    let s = g.singular_values();
    let (max, min) = (s.max(), s.min());
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Residual curve of the best weighted-L² approximation of `target` by
/// products of gradients of `basis[..N]`, for each `N` in `n_list`.
/// The projection uses modified Gram–Schmidt with reorthogonalization, so an
/// ill-conditioned Gram matrix is reported but does not spoil the residual.
pub fn density_check(
    d: &Domain,
    basis: &[Field],
    target: &Field,
    n_list: &[usize],
    gram_threshold: f64,
) -> Result<DensityReport> {
    d.check_field(target)?;
    if n_list.windows(2).any(|p| p[0] > p[1]) || n_list.last().is_some_and(|&n| n > basis.len()) {
        return Err(Error::InvalidConfig(format!("basis sizes {n_list:?} must be sorted and <= {}", basis.len())));
    }
    let w = d.quadrature_weights();
    let grads: Vec<(Field, Field)> = basis.iter().map(|u| d.gradient(u)).collect();
    let t = target.values().to_vec();
    let t_norm = inner(w, &t, &t).re.sqrt();
    if t_norm == 0.0 {
        return Err(Error::InvalidConfig("density target is zero".into()));
    }
    let mut r = t.clone();
    let mut q: Vec<Vec<Complex64>> = Vec::new();
    let mut products: Vec<Vec<Complex64>> = Vec::new();
    let mut report = DensityReport {
        n_list: n_list.to_vec(),
        residuals: Vec::new(),
        gram_condition: Vec::new(),
        ill_conditioned: Vec::new(),
        rank: Vec::new(),
        approximation: Field::zeros(d.node_count()),
    };
    let mut done = 0;
    for &n in n_list {
        for j in done..n {
            for i in 0..=j {
                let (gi, gj) = (&grads[i], &grads[j]);
                let p: Vec<Complex64> = (0..d.node_count())
                    .map(|k| gi.0.values()[k] * gj.0.values()[k] + gi.1.values()[k] * gj.1.values()[k])
                    .collect();
                let p_norm = inner(w, &p, &p).re.sqrt();
                products.push(p.clone());
                if p_norm == 0.0 {
                    continue;
                }
                let mut v = p;
                for _ in 0..2 {
                    for e in &q {
                        let c = inner(w, e, &v);
                        v.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
                    }
                }
                let v_norm = inner(w, &v, &v).re.sqrt();
                if v_norm <= DEPENDENCE_TOL * p_norm {
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= v_norm);
                let c = inner(w, &v, &r);
                r.iter_mut().zip(&v).for_each(|(x, y)| *x -= c * y);
                q.push(v);
            }
        }
        done = n;
        let cond = gram_condition(w, &products);
        if cond > gram_threshold {
            warn!("Gram matrix of {} products has condition {cond:.3e}", products.len());
        }
        report.residuals.push(inner(w, &r, &r).re.sqrt() / t_norm);
        report.gram_condition.push(cond);
        report.ill_conditioned.push(cond > gram_threshold);
        report.rank.push(q.len());
    }
    report.approximation = Field::from_values(t.iter().zip(&r).map(|(a, b)| a - b).collect());
    Ok(report)
}
