//! Harmonic test functions: harmonic polynomials, exponentials `e^{−ix·ζ/h}`
//! with `ζ·ζ = 0`, their corrections vanishing on the inaccessible boundary,
//! and discrete harmonic lifts of tapered traces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryArc, BoundaryMask, BoundaryTrace, Domain, Field};
use crate::elliptic::{harmonic_lift, LinearSolveOptions, SparseOperator};
use crate::error::{Error, Result};

/// Largest admissible `|e^{−ix·ζ/h}|` over the domain.
pub const OVERFLOW_GUARD: f64 = 1e12;
/// Default radius factor of the splitting neighbourhood.
pub const DEFAULT_EPS_SPLIT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Re,
    Im,
}

/// A point `ζ ∈ ℂ²` on the isotropic cone with its semiclassical scale `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicDirection {
    #[serde(with = "complex_pair")]
    pub zeta: [Complex64; 2],
    pub h_param: f64,
}

impl IsotropicDirection {
    pub fn new(zeta: [Complex64; 2], h_param: f64) -> Self {
        IsotropicDirection { zeta, h_param }
    }

    pub fn with_h(self, h_param: f64) -> Self {
        IsotropicDirection { h_param, ..self }
    }

    /// `|ζ₁² + ζ₂²| / |ζ|²`.
    pub fn cone_residual(&self) -> f64 {
        let [a, b] = self.zeta;
        (a * a + b * b).norm() / (a.norm_sqr() + b.norm_sqr())
    }

    pub fn norm(&self) -> f64 {
        (self.zeta[0].norm_sqr() + self.zeta[1].norm_sqr()).sqrt()
    }

    /// Complex conjugate reflected through the cone: `ζ̄`.
    pub fn conj(&self) -> Self {
        IsotropicDirection { zeta: [self.zeta[0].conj(), self.zeta[1].conj()], h_param: self.h_param }
    }

    /// `e^{−ix·ζ/h}` at a point.
    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        let phase = (self.zeta[0] * x + self.zeta[1] * y) / self.h_param;
        (-Complex64::i() * phase).exp()
    }

    /// Gradient of `e^{−ix·ζ/h}`: `−iζ/h` times the value.
    pub fn eval_grad(&self, x: f64, y: f64) -> [Complex64; 2] {
        let v = self.eval(x, y);
        let s = -Complex64::i() / self.h_param;
        [s * self.zeta[0] * v, s * self.zeta[1] * v]
    }
}

mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &[Complex64; 2], s: S) -> Result<S::Ok, S::Error> {
        [[z[0].re, z[0].im], [z[1].re, z[1].im]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Complex64; 2], D::Error> {
        let v = <[[f64; 2]; 2]>::deserialize(d)?;
        Ok([Complex64::new(v[0][0], v[0][1]), Complex64::new(v[1][0], v[1][1])])
    }
}

/// `ζ = (|ξ|/2)(e + i·sign·e⊥)` with `e = ξ/|ξ|`, `e⊥ = (−e₂, e₁)`.
///
/// Real and imaginary parts are orthogonal of equal length `|ξ|/2`, which is
/// exactly the condition `ζ·ζ = 0`; `ζ + ζ̄ = ξ`.
pub fn make_isotropic(xi: [f64; 2], sign: i8) -> Result<IsotropicDirection> {
    let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
    if r == 0.0 || !r.is_finite() {
        return Err(Error::ZeroFrequency);
    }
    let s = if sign >= 0 { 1.0 } else { -1.0 };
    let e = [xi[0] / r, xi[1] / r];
    let ep = [-e[1], e[0]];
    let half = 0.5 * r;
    Ok(IsotropicDirection::new(
        [Complex64::new(half * e[0], half * s * ep[0]), Complex64::new(half * e[1], half * s * ep[1])],
        1.0,
    ))
}

/// Splits `z` near `2ia·e₁` into `ζ + η` with both summands on the cone.
///
/// In two dimensions the cone is the union of the lines `ℂ(1, −i)` and
/// `ℂ(1, i)`, so the split is unique: `ζ = α(1, −i)`, `η = β(1, i)` with
/// `α = (z₁ + iz₂)/2`, `β = (z₁ − iz₂)/2`. At `z = 2ia·e₁` this gives
/// `ζ = aγ`, `η = −aγ̄` for `γ = (i, 1)`.
pub fn split_frequency(z: [Complex64; 2], a: f64, eps_split: f64) -> Result<(IsotropicDirection, IsotropicDirection)> {
    if !(a > 0.0) {
        return Err(Error::InvalidConfig(format!("split scale a must be positive, got {a}")));
    }
    let center = [Complex64::new(0.0, 2.0 * a), Complex64::new(0.0, 0.0)];
    let distance = ((z[0] - center[0]).norm_sqr() + (z[1] - center[1]).norm_sqr()).sqrt();
    let radius = 2.0 * eps_split * a;
    if distance >= radius {
        return Err(Error::OutsideNeighborhood { distance, radius });
    }
    let i = Complex64::i();
    let alpha = (z[0] + i * z[1]) * 0.5;
    let beta = (z[0] - i * z[1]) * 0.5;
    let zeta = [alpha, -i * alpha];
    // second component chosen so that ζ₂ + η₂ = z₂ holds exactly
    let eta = [z[0] - alpha, z[1] - zeta[1]];
    debug_assert!((eta[0] - beta).norm() <= 1e-15 * (1.0 + beta.norm()));
    Ok((IsotropicDirection::new(zeta, 1.0), IsotropicDirection::new(eta, 1.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub enum TestFnKind {
    Polynomial { degree: usize, parity: Parity },
    CgoRaw { dir: IsotropicDirection },
    CgoCorrected { dir: IsotropicDirection },
    /// Discrete harmonic lift of a smooth trace tapered onto an arc.
    TaperedLift { arc: BoundaryArc },
}

/// A (discretely) harmonic field together with where its trace may be nonzero.
#[derive(Clone, Debug)]
pub struct HarmonicTestFn {
    pub field: Field,
    pub kind: TestFnKind,
    pub trace_support: BoundaryMask,
}

impl HarmonicTestFn {
    /// Trace on `∂Ω`, restricted to the declared support.
    pub fn trace(&self, d: &Domain) -> BoundaryTrace {
        BoundaryTrace::new(self.field.values()[d.outer_range()].to_vec(), self.trace_support.clone())
    }

    /// Largest trace value found outside the declared support.
    pub fn support_leak(&self, d: &Domain) -> f64 {
        let full = d.trace(&self.field);
        full.leak_outside(&self.trace_support)
    }
}

/// `Re (x+iy)^k` or `Im (x+iy)^k` sampled at every node.
pub fn harmonic_polynomial(d: &Domain, degree: usize, parity: Parity) -> HarmonicTestFn {
    let field = Field::from_real_fn(d, |x, y| polynomial_value(degree, parity, x, y));
    HarmonicTestFn { field, kind: TestFnKind::Polynomial { degree, parity }, trace_support: d.full_boundary() }
}

pub fn polynomial_value(degree: usize, parity: Parity, x: f64, y: f64) -> f64 {
    let z = Complex64::new(x, y).powu(degree as u32);
    match parity {
        Parity::Re => z.re,
        Parity::Im => z.im,
    }
}

fn check_overflow(d: &Domain, dir: &IsotropicDirection) -> Result<()> {
    // |e^{−ix·ζ/h}| = e^{x·Im ζ / h}
    let peak = d
        .coords()
        .iter()
        .map(|p| (p[0] * dir.zeta[0].im + p[1] * dir.zeta[1].im) / dir.h_param)
        .fold(f64::NEG_INFINITY, f64::max)
        .exp();
    if !(peak <= OVERFLOW_GUARD) {
        return Err(Error::Overflow(peak));
    }
    Ok(())
}

/// `e^{−ix·ζ/h}` sampled at every node.
pub fn cgo_raw(d: &Domain, dir: &IsotropicDirection) -> Result<HarmonicTestFn> {
    check_overflow(d, dir)?;
    let field = Field::from_fn(d, |x, y| dir.eval(x, y));
    Ok(HarmonicTestFn { field, kind: TestFnKind::CgoRaw { dir: *dir }, trace_support: d.full_boundary() })
}

/// `e^{−ix·ζ/h} + w` with `w` discrete harmonic, `w = −e^{−ix·ζ/h}` on
/// `gamma_tilde` and `w = 0` on the rest of the boundary. The result vanishes
/// on `gamma_tilde` exactly.
pub fn cgo_corrected(
    d: &Domain,
    a: &SparseOperator,
    dir: &IsotropicDirection,
    gamma_tilde: &BoundaryMask,
    opts: &LinearSolveOptions,
) -> Result<HarmonicTestFn> {
    let raw = cgo_raw(d, dir)?;
    let support = gamma_tilde.complement();
    let mut field = raw.field;
    if gamma_tilde.count() > 0 {
        let bc = BoundaryTrace::from_fn(d, gamma_tilde, |_, x, y| -dir.eval(x, y));
        let w = harmonic_lift(a, &bc, opts)?;
        field.axpy(Complex64::new(1.0, 0.0), &w);
        // trace on Γ̃ is exactly zero by construction; remove roundoff
        for k in gamma_tilde.indices() {
            field.values_mut()[d.n_interior() + k] = Complex64::new(0.0, 0.0);
        }
    }
    Ok(HarmonicTestFn { field, kind: TestFnKind::CgoCorrected { dir: *dir }, trace_support: support })
}

/// Smooth cutoff on an arc: one in the middle, ramping to zero (with two
/// vanishing derivatives) over the outer `ramp` fraction at each end.
pub fn taper(arc: BoundaryArc, s: f64, period: f64, ramp: f64) -> f64 {
    if arc.length() >= period {
        return 1.0;
    }
    match arc.local_coordinate(s, period) {
        None => 0.0,
        Some(t) => smootherstep(t / ramp) * smootherstep((1.0 - t) / ramp),
    }
}

fn smootherstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (x * (6.0 * x - 15.0) + 10.0)
    }
}

pub const DEFAULT_TAPER_RAMP: f64 = 0.25;

/// Discrete harmonic lift of `taper · g` on `arc`.
pub fn tapered_lift(
    d: &Domain,
    a: &SparseOperator,
    arc: BoundaryArc,
    g: impl Fn(f64, f64) -> Complex64,
    opts: &LinearSolveOptions,
) -> Result<HarmonicTestFn> {
    let period = d.shape().boundary_period();
    let mask = d.arc_mask(arc);
    let bc = BoundaryTrace::from_fn(d, &mask, |s, x, y| g(x, y) * taper(arc, s, period, DEFAULT_TAPER_RAMP));
    let field = harmonic_lift(a, &bc, opts)?;
    Ok(HarmonicTestFn { field, kind: TestFnKind::TaperedLift { arc }, trace_support: mask })
}

/// `‖(−Δ_h v)_I‖∞` for a nodal field.
pub fn discrete_laplacian_residual(a: &SparseOperator, v: &Field) -> f64 {
    a.apply(v.values()).iter().map(|x| x.norm()).fold(0.0, f64::max)
}
