//! Jacobi-preconditioned Krylov solvers on complex vectors with a real
//! sparse operator.

use num_complex::Complex64;
use sprs::CsMat;

use crate::error::{Error, Result};

fn matvec(a: &CsMat<f64>, x: &[Complex64], y: &mut [Complex64]) {
    for (i, row) in a.outer_iterator().enumerate() {
        y[i] = row.iter().map(|(j, &v)| x[j] * v).sum();
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn inverse_diagonal(a: &CsMat<f64>) -> Vec<f64> {
    a.outer_iterator()
        .enumerate()
        .map(|(i, row)| {
            let d = row.get(i).copied().unwrap_or(0.0);
            if d != 0.0 { 1.0 / d } else { 1.0 }
        })
        .collect()
}

/// Preconditioned conjugate gradients for symmetric positive definite `a`.
/// Returns the iteration count.
pub fn pcg(a: &CsMat<f64>, b: &[Complex64], x: &mut [Complex64], tol: f64, max_iter: usize) -> Result<usize> {
    let n = b.len();
    let dinv = inverse_diagonal(a);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return Ok(0);
    }
    let mut r = vec![Complex64::new(0.0, 0.0); n];
    matvec(a, x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<Complex64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![Complex64::new(0.0, 0.0); n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(it);
        }
        matvec(a, &p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm(&r) / bnorm;
    if res <= tol {
        Ok(max_iter)
    } else {
        Err(Error::NoConvergence { iterations: max_iter, residual: res })
    }
}

/// Jacobi-preconditioned BiCGSTAB for general (nonsymmetric) `a`.
pub fn bicgstab(a: &CsMat<f64>, b: &[Complex64], x: &mut [Complex64], tol: f64, max_iter: usize) -> Result<usize> {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let dinv = inverse_diagonal(a);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero);
        return Ok(0);
    }
    let mut r = vec![zero; n];
    matvec(a, x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    let mut y = vec![zero; n];
    let mut s = vec![zero; n];
    let mut z = vec![zero; n];
    let mut t = vec![zero; n];
    for it in 0..max_iter {
        let res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(it);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new.norm() == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * dinv[i];
        }
        matvec(a, &y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(it + 1);
        }
        for i in 0..n {
            z[i] = s[i] * dinv[i];
        }
        matvec(a, &z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt.norm() > 0.0 { dot(&t, &s) / tt } else { zero };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega.norm() == 0.0 {
            break;
        }
    }
    let mut ax = vec![zero; n];
    matvec(a, x, &mut ax);
    let res = ax.iter().zip(b).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / bnorm;
    if res <= tol {
        Ok(max_iter)
    } else {
        Err(Error::NoConvergence { iterations: max_iter, residual: res })
    }
}
