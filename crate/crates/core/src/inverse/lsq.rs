//! Row-weighted Tikhonov least squares through the SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LsqReport {
    pub coefficients: Vec<f64>,
    /// `‖W(Ac − b)‖ / ‖Wb‖`.
    pub relative_residual: f64,
    /// `s_max / s_min` of the weighted, unregularized matrix.
    pub condition_estimate: f64,
    pub singular_values: Vec<f64>,
    /// Absolute Tikhonov weight used.
    pub lambda: f64,
    /// Generalized cross-validation score `‖W(Ac − b)‖² / (m − Σ fᵢ)²`.
    pub gcv: f64,
    pub rank_deficient: bool,
    pub n_rows: usize,
    pub n_unknowns: usize,
    /// Regularized inverse including the row weights, so that
    /// `coefficients = pinv · b`.
    pub pinv: DMatrix<f64>,
}

/// Minimizes `‖W(Ac − b)‖² + λ‖c‖²` with `λ = lambda_rel · ‖WA‖₂²` and
/// `W = diag(weights)`.
pub fn tikhonov_solve(
    rows: &DMatrix<f64>,
    rhs: &[f64],
    weights: &[f64],
    lambda_rel: f64,
    rank_threshold: f64,
) -> Result<LsqReport> {
    let (m, n) = rows.shape();
    if rhs.len() != m || weights.len() != m {
        return Err(Error::DomainMismatch { expected: m, got: rhs.len().min(weights.len()) });
    }
    if !(lambda_rel >= 0.0) {
        return Err(Error::InvalidConfig(format!("tikhonov_lambda must be >= 0, got {lambda_rel}")));
    }
    if m == 0 || n == 0 {
        return Err(Error::TooFewMoments { got: m, needed: n.max(1) });
    }
    let mut wa = rows.clone();
    for (i, mut row) in wa.row_iter_mut().enumerate() {
        row *= weights[i];
    }
    let wb = DVector::from_iterator(m, rhs.iter().zip(weights).map(|(b, w)| b * w));
    if !wa.iter().all(|v| v.is_finite()) || !wb.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("least-squares system"));
    }
    let svd = wa.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = if m >= n { s.min() } else { 0.0 };
    let lambda = lambda_rel * s_max * s_max;
    // filter factors s/(s²+λ); exact zeros are dropped
    let filt: Vec<f64> = s.iter().map(|&si| if si > 0.0 { si / (si * si + lambda) } else { 0.0 }).collect();
    let mut vf = vt.transpose();
    for (k, mut col) in vf.column_iter_mut().enumerate() {
        col *= filt[k];
    }
    let mut pinv = vf * u.transpose();
    for (j, mut col) in pinv.column_iter_mut().enumerate() {
        col *= weights[j];
    }
    let b = DVector::from_column_slice(rhs);
    let c = &pinv * &b;
    let res = &wa * &c - &wb;
    let nb = wb.norm();
    let relative_residual = if nb > 0.0 { res.norm() / nb } else { res.norm() };
    let dof: f64 = s.iter().map(|&si| if si > 0.0 { si * si / (si * si + lambda) } else { 0.0 }).sum();
    let gcv = res.norm_squared() / (m as f64 - dof).max(f64::MIN_POSITIVE).powi(2);
    let condition_estimate = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    Ok(LsqReport {
        coefficients: c.iter().copied().collect(),
        relative_residual,
        condition_estimate,
        singular_values: s.iter().copied().collect(),
        lambda,
        gcv,
        rank_deficient: !(condition_estimate <= rank_threshold),
        n_rows: m,
        n_unknowns: n,
        pinv,
    })
}
