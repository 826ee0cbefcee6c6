//! Families of harmonic test functions shared by the moment identities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryArc, BoundaryTrace, Domain, Field};
use crate::elliptic::{LinearSolveOptions, SparseOperator};
use crate::error::Result;
use crate::harmonic::{make_isotropic, polynomial_value, tapered_lift, HarmonicTestFn, Parity};

/// Analytic description of a real harmonic function, so the same family can
/// be instantiated on several grids.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestSpec {
    /// `Re (x+iy)^k` or `Im (x+iy)^k`; degree 0 is the constant.
    Polynomial { degree: usize, parity: Parity },
    /// Real or imaginary part of `e^{−ix·ζ/h}` with `ζ` built from `xi`.
    Cgo { xi: [f64; 2], sign: i8, h: f64, parity: Parity },
}

impl TestSpec {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        Ok(match *self {
            TestSpec::Polynomial { degree, parity } => polynomial_value(degree, parity, x, y),
            TestSpec::Cgo { xi, sign, h, parity } => {
                let v = make_isotropic(xi, sign)?.with_h(h).eval(x, y);
                match parity {
                    Parity::Re => v.re,
                    Parity::Im => v.im,
                }
            }
        })
    }

    pub fn label(&self) -> String {
        match *self {
            TestSpec::Polynomial { degree, parity } => format!("poly_{degree}_{parity:?}").to_lowercase(),
            TestSpec::Cgo { xi, sign, h, parity } => {
                format!("cgo_{:?}_{:?}_{sign}_{h:?}_{parity:?}", xi[0], xi[1]).to_lowercase()
            }
        }
    }

    /// All harmonic polynomials of degree `≤ max_degree` (one constant).
    pub fn polynomials(max_degree: usize) -> Vec<TestSpec> {
        let mut out = vec![TestSpec::Polynomial { degree: 0, parity: Parity::Re }];
        for degree in 1..=max_degree {
            out.push(TestSpec::Polynomial { degree, parity: Parity::Re });
            out.push(TestSpec::Polynomial { degree, parity: Parity::Im });
        }
        out
    }

    /// Real and imaginary parts of exponentials with frequencies `|ξ| = freq`
    /// in `n_dirs` equally spaced directions.
    pub fn cgo_family(n_dirs: usize, freq: f64, h: f64) -> Vec<TestSpec> {
        let mut out = Vec::with_capacity(2 * n_dirs);
        for j in 0..n_dirs {
            let t = std::f64::consts::PI * j as f64 / n_dirs as f64;
            let xi = [freq * t.cos(), freq * t.sin()];
            for parity in [Parity::Re, Parity::Im] {
                out.push(TestSpec::Cgo { xi, sign: 1, h, parity });
            }
        }
        out
    }

    /// Exponentials whose modulus `e^{x·Im ζ/h}` grows toward `growth_angle`
    /// (give or take `spread`), so that they are small on the far side of
    /// the domain: `n_dirs` growth directions times each frequency `|ξ|`.
    pub fn cgo_fan(growth_angle: f64, spread: f64, n_dirs: usize, freqs: &[f64], h: f64) -> Vec<TestSpec> {
        let mut out = Vec::with_capacity(2 * n_dirs * freqs.len());
        for &freq in freqs {
            for j in 0..n_dirs {
                let g = if n_dirs == 1 {
                    growth_angle
                } else {
                    growth_angle - spread + 2.0 * spread * j as f64 / (n_dirs - 1) as f64
                };
                // Im ζ points along e⊥ for sign +1, with e = ξ/|ξ|
                let t = g - std::f64::consts::FRAC_PI_2;
                let xi = [freq * t.cos(), freq * t.sin()];
                for parity in [Parity::Re, Parity::Im] {
                    out.push(TestSpec::Cgo { xi, sign: 1, h, parity });
                }
            }
        }
        out
    }
}

/// How a test function `v` multiplying the boundary flux is turned into an
/// interior measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowModel {
    /// `v dx` with the cut-cell quadrature.
    Quadrature,
    /// Weights `W` with `Σ W s = ∫_{Γ₂} ∂_ν w v dS` exactly for every
    /// discrete solution of `−Δ_h w = s`, `w|∂Ω = 0`: the discrete Green
    /// identity, obtained from one transposed solve.
    DiscreteAdjoint,
}

/// Discrete harmonic lifts of tapered traces of [`TestSpec`]s on one arc,
/// with their gradients and adjoint measures.
#[derive(Clone, Debug)]
pub struct TestBank {
    specs: Vec<TestSpec>,
    fns: Vec<HarmonicTestFn>,
    grads: Vec<(Field, Field)>,
    adjoint: Vec<Vec<Complex64>>,
    quad: Vec<f64>,
}

/// Nodal weights `W` such that `Σₙ Wₙ sₙ = ∫_{Γ₂} (∂_ν w) v dS` whenever
/// `A_II w_I = −s_I` and `w = 0` on the boundary.
pub fn adjoint_weights(d: &Domain, a: &SparseOperator, v: &Field, opts: &LinearSolveOptions) -> Result<Vec<Complex64>> {
    d.check_field(v)?;
    let n_int = d.n_interior();
    let mut c = vec![Complex64::new(0.0, 0.0); n_int];
    let (bw, stencils) = (d.boundary_weights(), d.normal_stencils());
    for k in d.gamma2().indices() {
        let coeff = v.values()[n_int + k] * bw[k];
        for &(node, s) in &stencils[k] {
            if node < n_int {
                c[node] += coeff * s;
            }
        }
    }
    let z = a.solve_interior_transpose(c, opts)?;
    let mut out: Vec<Complex64> = z.into_iter().map(|x| -x).collect();
    out.resize(d.node_count(), Complex64::new(0.0, 0.0));
    Ok(out)
}

impl TestBank {
    pub fn build(
        d: &Domain,
        a: &SparseOperator,
        specs: &[TestSpec],
        arc: BoundaryArc,
        opts: &LinearSolveOptions,
    ) -> Result<Self> {
        let mut fns = Vec::with_capacity(specs.len());
        let mut grads = Vec::with_capacity(specs.len());
        let mut adjoint = Vec::with_capacity(specs.len());
        for spec in specs {
            // surface CGO construction errors before sampling
            spec.eval(0.0, 0.0)?;
            let f = tapered_lift(d, a, arc, |x, y| Complex64::new(spec.eval(x, y).unwrap_or(0.0), 0.0), opts)?;
            grads.push(d.gradient(&f.field));
            adjoint.push(adjoint_weights(d, a, &f.field, opts)?);
            fns.push(f);
        }
        Ok(TestBank { specs: specs.to_vec(), fns, grads, adjoint, quad: d.quadrature_weights().to_vec() })
    }

    pub fn len(&self) -> usize {
        self.fns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fns.is_empty()
    }

    pub fn spec(&self, i: usize) -> &TestSpec {
        &self.specs[i]
    }

    pub fn specs(&self) -> &[TestSpec] {
        &self.specs
    }

    pub fn function(&self, i: usize) -> &HarmonicTestFn {
        &self.fns[i]
    }

    pub fn field(&self, i: usize) -> &Field {
        &self.fns[i].field
    }

    pub fn gradient(&self, i: usize) -> &(Field, Field) {
        &self.grads[i]
    }

    /// Interior measure standing in for `vᵢ dx`.
    pub fn measure(&self, i: usize, model: RowModel) -> Vec<Complex64> {
        match model {
            RowModel::Quadrature => self.fns[i].field.values().iter().zip(&self.quad).map(|(v, w)| v * w).collect(),
            RowModel::DiscreteAdjoint => self.adjoint[i].clone(),
        }
    }

    pub fn trace(&self, d: &Domain, i: usize) -> BoundaryTrace {
        self.fns[i].trace(d)
    }
}
