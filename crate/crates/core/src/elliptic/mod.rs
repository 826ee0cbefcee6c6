//! Discrete `−Δ` with Dirichlet data on `∂Ω` (and `∂D`), and its solvers.
//!
//! Cut nodes next to the curved boundary use the Shortley–Weller stencil,
//! which keeps the scheme second order but makes the operator nonsymmetric
//! on the disk. On the unit square the operator is the symmetric five-point
//! Laplacian.

mod banded;
mod krylov;

use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

pub use banded::{BandMatrix, BandScalar, BandedLu};

use crate::domain::{BoundaryTrace, Domain, Field};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    DirectFactorization,
    ConjugateGradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSolveOptions {
    pub method: SolveMethod,
    /// Relative residual target for the iterative path.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LinearSolveOptions {
    fn default() -> Self {
        LinearSolveOptions { method: SolveMethod::DirectFactorization, tol: 1e-12, max_iter: 20_000 }
    }
}

impl LinearSolveOptions {
    /// Direct factorization up to 128 cells per side, Krylov beyond.
    pub fn for_resolution(n_cells: usize) -> Self {
        let method = if n_cells <= 128 { SolveMethod::DirectFactorization } else { SolveMethod::ConjugateGradient };
        LinearSolveOptions { method, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-6) {
            return Err(Error::InvalidConfig(format!("linear solver tol must lie in (0, 1e-6], got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("linear solver max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Discrete `−Δ` split into its interior block `A_II` and the coupling
/// `A_IB` to Dirichlet nodes, so `(−Δu)_I = A_II u_I + A_IB u_B`.
#[derive(Debug)]
pub struct SparseOperator {
    n_nodes: usize,
    n_interior: usize,
    n_outer: usize,
    a_ii: CsMat<f64>,
    a_ib: CsMat<f64>,
    symmetric: bool,
    bandwidth: usize,
    lu: OnceLock<std::result::Result<BandedLu<f64>, usize>>,
    lu_t: OnceLock<std::result::Result<BandedLu<f64>, usize>>,
}

pub fn assemble_laplacian(d: &Domain) -> SparseOperator {
    let n_int = d.n_interior();
    let n_bnd = d.node_count() - n_int;
    let h2 = d.grid_spacing().powi(2);
    let mut ii = TriMat::new((n_int, n_int));
    let mut ib = TriMat::new((n_int, n_bnd));
    let mut bandwidth = 0;
    for (k, arms) in d.arms().iter().enumerate() {
        for pair in [[arms[0], arms[1]], [arms[2], arms[3]]] {
            let (a, b) = (pair[0].frac, pair[1].frac);
            let entries = [
                (pair[0].node, -2.0 / (h2 * a * (a + b))),
                (pair[1].node, -2.0 / (h2 * b * (a + b))),
                (k, 2.0 / (h2 * a * b)),
            ];
            for (node, v) in entries {
                if node < n_int {
                    ii.add_triplet(k, node, v);
                    bandwidth = bandwidth.max(k.abs_diff(node));
                } else {
                    ib.add_triplet(k, node - n_int, v);
                }
            }
        }
    }
    let a_ii: CsMat<f64> = ii.to_csr();
    let a_ib: CsMat<f64> = ib.to_csr();
    let scale = a_ii.outer_iterator().enumerate().map(|(i, r)| r.get(i).copied().unwrap_or(0.0)).fold(0.0, f64::max);
    let symmetric = a_ii.outer_iterator().enumerate().all(|(i, row)| {
        row.iter().all(|(j, &v)| a_ii.get(j, i).is_some_and(|&t| (t - v).abs() <= 1e-12 * scale))
    });
    SparseOperator {
        n_nodes: d.node_count(),
        n_interior: n_int,
        n_outer: d.n_outer(),
        a_ii,
        a_ib,
        symmetric,
        bandwidth,
        lu: OnceLock::new(),
        lu_t: OnceLock::new(),
    }
}

impl SparseOperator {
    /// Number of unknowns (interior nodes).
    pub fn size(&self) -> usize {
        self.n_interior
    }

    pub fn node_count(&self) -> usize {
        self.n_nodes
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn interior_block(&self) -> &CsMat<f64> {
        &self.a_ii
    }

    pub fn boundary_block(&self) -> &CsMat<f64> {
        &self.a_ib
    }

    /// `(−Δu)` at interior nodes for a full nodal vector.
    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let (ui, ub) = u.split_at(self.n_interior);
        let mut out: Vec<Complex64> = self
            .a_ii
            .outer_iterator()
            .map(|row| row.iter().map(|(j, &v)| ui[j] * v).sum())
            .collect();
        for (i, row) in self.a_ib.outer_iterator().enumerate() {
            out[i] += row.iter().map(|(j, &v)| ub[j] * v).sum::<Complex64>();
        }
        out
    }

    /// `A_II` copied into band storage, for building perturbed operators.
    pub fn band_matrix<T: BandScalar + From<f64>>(&self) -> BandMatrix<T> {
        let mut m = BandMatrix::zeros(self.n_interior, self.bandwidth);
        for (i, row) in self.a_ii.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                m.add(i, j, T::from(v));
            }
        }
        m
    }

    /// Cached factorization of `A_II`, computed on first use.
    pub fn factorization(&self) -> Result<&BandedLu<f64>> {
        self.lu
            .get_or_init(|| self.band_matrix::<f64>().factor().map_err(|e| match e {
                Error::SingularSystem(k) => k,
                _ => unreachable!(),
            }))
            .as_ref()
            .map_err(|&k| Error::SingularSystem(k))
    }

    /// Solves `A_IIᵀ x = b`; used for adjoints of boundary functionals.
    pub fn solve_interior_transpose(&self, mut b: Vec<Complex64>, opts: &LinearSolveOptions) -> Result<Vec<Complex64>> {
        if b.len() != self.n_interior {
            return Err(Error::DomainMismatch { expected: self.n_interior, got: b.len() });
        }
        if self.symmetric {
            return self.solve_interior(b, opts);
        }
        match opts.method {
            SolveMethod::DirectFactorization => {
                let lu = self
                    .lu_t
                    .get_or_init(|| {
                        let mut m = BandMatrix::zeros(self.n_interior, self.bandwidth);
                        for (i, row) in self.a_ii.outer_iterator().enumerate() {
                            for (j, &v) in row.iter() {
                                m.add(j, i, v);
                            }
                        }
                        m.factor().map_err(|e| match e {
                            Error::SingularSystem(k) => k,
                            _ => unreachable!(),
                        })
                    })
                    .as_ref()
                    .map_err(|&k| Error::SingularSystem(k))?;
                lu.solve_in_place(&mut b);
                Ok(b)
            }
            SolveMethod::ConjugateGradient => {
                opts.validate()?;
                let at: CsMat<f64> = self.a_ii.transpose_view().to_csr();
                let mut x = vec![Complex64::new(0.0, 0.0); b.len()];
                krylov::bicgstab(&at, &b, &mut x, opts.tol, opts.max_iter)?;
                Ok(x)
            }
        }
    }

    /// Solves `A_II u_I = rhs_I − A_IB u_B` and returns the full nodal vector.
    pub fn solve_with_boundary(
        &self,
        rhs_interior: &[Complex64],
        boundary: &[Complex64],
        opts: &LinearSolveOptions,
    ) -> Result<Field> {
        if rhs_interior.len() != self.n_interior {
            return Err(Error::DomainMismatch { expected: self.n_interior, got: rhs_interior.len() });
        }
        if boundary.len() != self.n_nodes - self.n_interior {
            return Err(Error::DomainMismatch { expected: self.n_nodes - self.n_interior, got: boundary.len() });
        }
        let mut b = rhs_interior.to_vec();
        for (i, row) in self.a_ib.outer_iterator().enumerate() {
            b[i] -= row.iter().map(|(j, &v)| boundary[j] * v).sum::<Complex64>();
        }
        let x = self.solve_interior(b, opts)?;
        let mut values = x;
        values.extend_from_slice(boundary);
        let u = Field::from_values(values);
        if !u.is_finite() {
            return Err(Error::NonFinite("solve_dirichlet"));
        }
        Ok(u)
    }

    /// Solves `A_II x = b` for interior unknowns only.
    pub fn solve_interior(&self, mut b: Vec<Complex64>, opts: &LinearSolveOptions) -> Result<Vec<Complex64>> {
        match opts.method {
            SolveMethod::DirectFactorization => {
                self.factorization()?.solve_in_place(&mut b);
                Ok(b)
            }
            SolveMethod::ConjugateGradient => {
                opts.validate()?;
                let mut x = vec![Complex64::new(0.0, 0.0); b.len()];
                if self.symmetric {
                    krylov::pcg(&self.a_ii, &b, &mut x, opts.tol, opts.max_iter)?;
                } else {
                    krylov::bicgstab(&self.a_ii, &b, &mut x, opts.tol, opts.max_iter)?;
                }
                Ok(x)
            }
        }
    }
}

/// Solves `−Δu = rhs` in the interior with `u = bc` on `∂Ω` and `u = 0` on
/// the obstacle boundary, if any.
pub fn solve_dirichlet(
    a: &SparseOperator,
    rhs: &Field,
    bc: &BoundaryTrace,
    opts: &LinearSolveOptions,
) -> Result<Field> {
    if rhs.len() != a.n_nodes {
        return Err(Error::DomainMismatch { expected: a.n_nodes, got: rhs.len() });
    }
    if bc.len() != a.n_outer {
        return Err(Error::DomainMismatch { expected: a.n_outer, got: bc.len() });
    }
    let mut boundary = bc.values().to_vec();
    boundary.resize(a.n_nodes - a.n_interior, Complex64::new(0.0, 0.0));
    a.solve_with_boundary(&rhs.values()[..a.n_interior], &boundary, opts)
}

/// Discrete harmonic extension of `bc` (zero on the obstacle boundary).
pub fn harmonic_lift(a: &SparseOperator, bc: &BoundaryTrace, opts: &LinearSolveOptions) -> Result<Field> {
    solve_dirichlet(a, &Field::zeros(a.n_nodes), bc, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CircleParams, DomainConfig};
    use std::f64::consts::PI;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn square_stencil_values() {
        let d = Domain::build(&DomainConfig::square(32)).unwrap();
        let a = assemble_laplacian(&d);
        let h = d.grid_spacing();
        assert!(a.is_symmetric());
        // a node away from the boundary
        let k = d.coords().iter().position(|p| (p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12).unwrap();
        let row = a.interior_block().outer_view(k).unwrap();
        assert_eq!(row.nnz(), 5);
        for (j, &v) in row.iter() {
            let expected = if j == k { 4.0 / (h * h) } else { -1.0 / (h * h) };
            assert!((v - expected).abs() < 1e-9 * expected.abs());
        }
    }

    #[test]
    fn minus_laplacian_of_x_squared() {
        for d in [
            Domain::build(&DomainConfig::square(32)).unwrap(),
            Domain::build(&DomainConfig::disk(32)).unwrap(),
        ] {
            let a = assemble_laplacian(&d);
            let u = Field::from_real_fn(&d, |x, _| x * x);
            for v in a.apply(u.values()) {
                assert!((v - c(-2.0)).norm() < 1e-8, "{v}");
            }
        }
    }

    #[test]
    fn smallest_square_eigenvalue() {
        let d = Domain::build(&DomainConfig::square(64)).unwrap();
        let a = assemble_laplacian(&d);
        let lu = a.factorization().unwrap();
        let mut x: Vec<Complex64> = (0..a.size()).map(|i| c(1.0 + (i % 7) as f64 * 0.01)).collect();
        let mut lambda = 0.0;
        for _ in 0..50 {
            let nrm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= nrm);
            let prev = x.clone();
            lu.solve_in_place(&mut x);
            let rq: f64 = prev.iter().zip(&x).map(|(p, y)| (p.conj() * y).re).sum();
            lambda = 1.0 / rq;
        }
        let exact = 2.0 * PI * PI;
        assert!((lambda - exact).abs() / exact < 0.02, "{lambda}");
    }

    #[test]
    fn harmonic_polynomial_reproduced_on_disk() {
        let d = Domain::build(&DomainConfig::disk(64)).unwrap();
        let a = assemble_laplacian(&d);
        let exact = Field::from_fn(&d, |x, y| c(Complex64::new(x, y).powu(3).re));
        let bc = d.trace(&exact);
        let u = harmonic_lift(&a, &bc, &LinearSolveOptions::default()).unwrap();
        assert!(u.sub(&exact).sup_norm() < 1e-3);
    }

    fn manufactured_error(d: &Domain, opts: &LinearSolveOptions) -> f64 {
        let a = assemble_laplacian(d);
        let exact = Field::from_real_fn(d, |x, y| (PI * x).sin() * (PI * y).sin());
        let rhs = exact.scaled(c(2.0 * PI * PI));
        let u = solve_dirichlet(&a, &rhs, &d.trace(&exact), opts).unwrap();
        u.sub(&exact).sup_norm()
    }

    #[test]
    fn manufactured_solution_second_order() {
        for shape in [DomainConfig::square as fn(usize) -> DomainConfig, DomainConfig::disk] {
            let e: Vec<f64> = [16, 32, 64]
                .iter()
                .map(|&n| manufactured_error(&Domain::build(&shape(n)).unwrap(), &LinearSolveOptions::default()))
                .collect();
            let order = (e[1] / e[2]).log2();
            assert!(order > 1.9, "{e:?}");
        }
    }

    #[test]
    fn krylov_matches_direct() {
        let opts = LinearSolveOptions { method: SolveMethod::ConjugateGradient, tol: 1e-12, max_iter: 10_000 };
        for cfg in [DomainConfig::square(32), DomainConfig::disk(32)] {
            let d = Domain::build(&cfg).unwrap();
            let e_direct = manufactured_error(&d, &LinearSolveOptions::default());
            let e_iter = manufactured_error(&d, &opts);
            assert!((e_direct - e_iter).abs() < 1e-9);
        }
    }

    #[test]
    fn krylov_reports_non_convergence() {
        let d = Domain::build(&DomainConfig::disk(32)).unwrap();
        let a = assemble_laplacian(&d);
        let opts = LinearSolveOptions { method: SolveMethod::ConjugateGradient, tol: 1e-12, max_iter: 2 };
        let bc = BoundaryTrace::from_fn(&d, &d.full_boundary(), |s, _, _| c(s.cos()));
        assert!(matches!(harmonic_lift(&a, &bc, &opts), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn obstacle_maximum_principle() {
        let cfg = DomainConfig::disk(64).with_obstacle(Some(CircleParams::new([0.1, -0.05], 0.25)));
        let d = Domain::build(&cfg).unwrap();
        let a = assemble_laplacian(&d);
        let bc = BoundaryTrace::from_fn(&d, &d.full_boundary(), |_, _, _| c(1.0));
        let u = harmonic_lift(&a, &bc, &LinearSolveOptions::default()).unwrap();
        for v in &u.values()[d.interior_range()] {
            assert!(v.re >= 0.0 && v.re <= 1.0);
        }
        assert!(u.values()[d.obstacle_range()].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn square_operator_self_adjoint() {
        let d = Domain::build(&DomainConfig::square(24)).unwrap();
        let a = assemble_laplacian(&d);
        let n = d.node_count();
        let mk = |seed: u64| -> Vec<Complex64> {
            (0..n)
                .map(|i| {
                    if i < d.n_interior() {
                        c(((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0)
                    } else {
                        c(0.0)
                    }
                })
                .collect()
        };
        let (u, v) = (mk(1), mk(7));
        let au = a.apply(&u);
        let av = a.apply(&v);
        let l: f64 = au.iter().zip(&v).map(|(x, y)| (x * y).re).sum();
        let r: f64 = u.iter().zip(&av).map(|(x, y)| (x * y).re).sum();
        assert!((l - r).abs() <= 1e-12 * l.abs());
    }

    #[test]
    fn transpose_solve_is_adjoint() {
        // ⟨A⁻¹x, y⟩ = ⟨x, A⁻ᵀy⟩ on the nonsymmetric disk operator
        let d = Domain::build(&DomainConfig::disk(24)).unwrap();
        let a = assemble_laplacian(&d);
        assert!(!a.is_symmetric());
        let n = a.size();
        let x: Vec<Complex64> = (0..n).map(|i| c((i as f64 * 0.37).sin())).collect();
        let y: Vec<Complex64> = (0..n).map(|i| c((i as f64 * 0.11).cos())).collect();
        for opts in [
            LinearSolveOptions::default(),
            LinearSolveOptions { method: SolveMethod::ConjugateGradient, tol: 1e-13, max_iter: 10_000 },
        ] {
            let ax = a.solve_interior(x.clone(), &opts).unwrap();
            let aty = a.solve_interior_transpose(y.clone(), &opts).unwrap();
            let l: Complex64 = ax.iter().zip(&y).map(|(p, q)| p * q).sum();
            let r: Complex64 = x.iter().zip(&aty).map(|(p, q)| p * q).sum();
            assert!((l - r).norm() <= 1e-9 * l.norm(), "{l} vs {r}");
        }
    }
}
