//! Integral identities linking linearized boundary data to interior moments.
//!
//! Multiplying `−Δw + 2q ∇v₁·∇v₂ = 0`, `w|∂Ω = 0`, by a harmonic `v₃` and
//! integrating by parts gives `∫ q (∇v₁·∇v₂) v₃ = ½ ∫_{Γ₂} ∂_ν w v₃` when the
//! trace of `v₃` lives on `Γ₂`. At order `m ≥ 3` the boundary integral equals
//! `∫ V_m v₁⋯v_m v_{m+1}` plus a term fixed by the lower-order coefficients,
//! which the reconstruction subtracts.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bank::TestBank;
use crate::domain::{Domain, Field};
use crate::error::{Error, Result};
use crate::linearize::{linearization_oracle, mth_linearization, second_linearization, EpsStencil, LinearizedDtNRecord};
use crate::semilinear::ForwardModel;

/// Relative trace size outside `Γ₂` tolerated for the last test function.
const SUPPORT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    BoundaryData,
    InteriorOracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentRecord {
    /// Test-function ids; the last one multiplies the boundary flux.
    pub ids: Vec<usize>,
    pub value: Complex64,
    pub source: MomentSource,
    pub error_estimate: f64,
}

/// `c_m ∫_{Γ₂} (∂_ν w) v dS` from a linearization record, with `c₂ = ½` and
/// `c_m = 1` otherwise.
pub fn moment_from_boundary(
    d: &Domain,
    rec: &LinearizedDtNRecord,
    v: &Field,
    ids: Vec<usize>,
) -> Result<MomentRecord> {
    d.check_field(v)?;
    if rec.output.len() != d.n_outer() {
        return Err(Error::DomainMismatch { expected: d.n_outer(), got: rec.output.len() });
    }
    let trace = d.trace(v);
    let leak = trace.leak_outside(d.gamma2());
    if leak > SUPPORT_TOL * trace.sup_norm().max(1.0) {
        return Err(Error::SupportViolation(leak));
    }
    let factor = if rec.order() == 2 { 0.5 } else { 1.0 };
    let w = d.boundary_weights();
    let out = rec.output.values();
    let mut value = Complex64::new(0.0, 0.0);
    let mut abs_v = 0.0;
    for k in d.gamma2().indices() {
        value += out[k] * trace.values()[k] * w[k];
        abs_v += trace.values()[k].norm() * w[k];
    }
    Ok(MomentRecord {
        ids,
        value: value * factor,
        source: MomentSource::BoundaryData,
        error_estimate: factor * rec.total_error() * abs_v,
    })
}

/// `∫ q (∇v₁·∇v₂) v₃` by nodal quadrature.
pub fn q_moment_interior(d: &Domain, q: &[f64], v1: &Field, v2: &Field, v3: &Field) -> Complex64 {
    let (g1, g2) = (d.gradient(v1), d.gradient(v2));
    q_moment_from_gradients(d, q, &g1, &g2, v3)
}

pub(crate) fn q_moment_from_gradients(
    d: &Domain,
    q: &[f64],
    g1: &(Field, Field),
    g2: &(Field, Field),
    v3: &Field,
) -> Complex64 {
    let w = d.quadrature_weights();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d.node_count() {
        if w[i] == 0.0 || q[i] == 0.0 {
            continue;
        }
        let dot = g1.0.values()[i] * g2.0.values()[i] + g1.1.values()[i] * g2.1.values()[i];
        acc += dot * v3.values()[i] * (q[i] * w[i]);
    }
    acc
}

/// `∫ V Π vₗ` by nodal quadrature.
pub fn v_moment_interior(d: &Domain, v: &[f64], fields: &[&Field]) -> Complex64 {
    let w = d.quadrature_weights();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d.node_count() {
        if w[i] == 0.0 || v[i] == 0.0 {
            continue;
        }
        let prod: Complex64 = fields.iter().map(|f| f.values()[i]).product();
        acc += prod * (v[i] * w[i]);
    }
    acc
}

/// `count` random tuples `[l₁, …, l_m, k]`, inputs drawn uniformly from
/// `0..n_inputs` and `k` from `0..n_tests`; the inputs are sorted since the
/// data are symmetric in them.
pub fn random_tuples(n_inputs: usize, n_tests: usize, order: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    if n_inputs == 0 || n_tests == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut t: Vec<usize> = (0..order).map(|_| rng.random_range(0..n_inputs)).collect();
            t.sort_unstable();
            t.push(rng.random_range(0..n_tests));
            t
        })
        .collect()
}

/// Every multiset of `order` inputs combined with every test function.
pub fn all_tuples(n_inputs: usize, n_tests: usize, order: usize) -> Vec<Vec<usize>> {
    fn grow(acc: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, lo: usize, n: usize, left: usize) {
        if left == 0 {
            acc.push(cur.clone());
            return;
        }
        for i in lo..n {
            cur.push(i);
            grow(acc, cur, i, n, left - 1);
            cur.pop();
        }
    }
    let mut inputs = Vec::new();
    grow(&mut inputs, &mut Vec::new(), 0, n_inputs, order);
    let mut out = Vec::with_capacity(inputs.len() * n_tests);
    for s in inputs {
        for k in 0..n_tests {
            let mut t = s.clone();
            t.push(k);
            out.push(t);
        }
    }
    out
}

fn check_tuple(t: &[usize], inputs: &TestBank, tests: &TestBank) -> Result<()> {
    let ok = t.len() >= 2 && t[..t.len() - 1].iter().all(|&i| i < inputs.len()) && t[t.len() - 1] < tests.len();
    if !ok {
        return Err(Error::InvalidConfig(format!(
            "moment tuple {t:?} does not index banks of {} inputs and {} tests",
            inputs.len(),
            tests.len()
        )));
    }
    Ok(())
}

/// Boundary-data moments for `tuples` `[l₁, …, l_m, k]`: inputs from
/// `inputs` (traces on `Γ₁`), last function from `tests` (trace on `Γ₂`).
/// One `m`-th linearization is computed per distinct input multiset, in
/// parallel.
pub fn boundary_moments(
    model: &ForwardModel,
    inputs: &TestBank,
    tests: &TestBank,
    tuples: &[Vec<usize>],
    stencil: &EpsStencil,
) -> Result<Vec<MomentRecord>> {
    let d = model.domain();
    let mut keys: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for t in tuples {
        check_tuple(t, inputs, tests)?;
        let mut key = t[..t.len() - 1].to_vec();
        key.sort_unstable();
        let next = keys.len();
        keys.entry(key).or_insert(next);
    }
    let mut ordered: Vec<(&Vec<usize>, usize)> = keys.iter().map(|(k, v)| (k, *v)).collect();
    ordered.sort_by_key(|x| x.1);
    let records: Vec<LinearizedDtNRecord> = ordered
        .par_iter()
        .map(|(key, _)| {
            let traces: Vec<_> = key.iter().map(|&l| inputs.trace(d, l)).collect();
            mth_linearization(model, &traces, stencil)
        })
        .collect::<Result<_>>()?;
    tuples
        .iter()
        .map(|t| {
            let mut key = t[..t.len() - 1].to_vec();
            key.sort_unstable();
            let k = *t.last().unwrap();
            moment_from_boundary(d, &records[keys[&key]], tests.field(k), t.clone())
        })
        .collect()
}

/// Interior-quadrature `q`-moments for triplets `[i, j, k]`.
pub fn interior_q_moments(
    d: &Domain,
    q: &[f64],
    inputs: &TestBank,
    tests: &TestBank,
    tuples: &[Vec<usize>],
) -> Result<Vec<MomentRecord>> {
    tuples
        .iter()
        .map(|t| {
            let [i, j, k] = t[..] else {
                return Err(Error::InvalidConfig(format!("q-moment needs 3 ids, got {}", t.len())));
            };
            check_tuple(t, inputs, tests)?;
            let value = q_moment_from_gradients(d, q, inputs.gradient(i), inputs.gradient(j), tests.field(k));
            Ok(MomentRecord { ids: t.clone(), value, source: MomentSource::InteriorOracle, error_estimate: 0.0 })
        })
        .collect()
}

/// One boundary/interior comparison of a `q`-moment.
#[derive(Clone, Debug)]
pub struct GreenCheck {
    pub boundary: MomentRecord,
    pub interior: MomentRecord,
    pub gap: f64,
    pub agree: bool,
}

/// Compares boundary-data moments against the interior quadrature for each
/// triplet `(i, j, k)`. Discretization errors of both sides are estimated by
/// repeating the computation on a coarser grid (direct linearized solves are
/// used there, so no extra polarization is needed); the boundary side also
/// carries the stencil error of its record. Each bank serves as inputs and
/// test functions, so its traces must lie in `Γ₁ ∩ Γ₂`.
pub fn green_consistency(
    fine: &ForwardModel,
    fine_bank: &TestBank,
    coarse: &ForwardModel,
    coarse_bank: &TestBank,
    triplets: &[[usize; 3]],
    stencil: &EpsStencil,
) -> Result<Vec<GreenCheck>> {
    let (df, dc) = (fine.domain(), coarse.domain());
    let mut records: HashMap<(usize, usize), LinearizedDtNRecord> = HashMap::new();
    let mut coarse_out = HashMap::new();
    let mut out = Vec::with_capacity(triplets.len());
    for &[i, j, k] in triplets {
        let key = (i.min(j), i.max(j));
        if !records.contains_key(&key) {
            let rec = second_linearization(fine, &fine_bank.trace(df, i), &fine_bank.trace(df, j), stencil)?;
            records.insert(key, rec);
            let oc = linearization_oracle(coarse, &[coarse_bank.trace(dc, i), coarse_bank.trace(dc, j)])?;
            coarse_out.insert(key, oc);
        }
        let rec = &records[&key];
        let b = moment_from_boundary(df, rec, fine_bank.field(k), vec![i, j, k])?;
        let oc = &coarse_out[&key];
        let tc = dc.trace(coarse_bank.field(k));
        let bc: Complex64 =
            dc.gamma2().indices().map(|l| oc.values()[l] * tc.values()[l] * dc.boundary_weights()[l]).sum::<Complex64>() * 0.5;

        let qf = fine.coefficients().q();
        let qc = coarse.coefficients().q();
        let i_f = q_moment_from_gradients(df, qf, fine_bank.gradient(i), fine_bank.gradient(j), fine_bank.field(k));
        let i_c =
            q_moment_from_gradients(dc, qc, coarse_bank.gradient(i), coarse_bank.gradient(j), coarse_bank.field(k));

        let boundary = MomentRecord { error_estimate: b.error_estimate + (b.value - bc).norm(), ..b };
        let interior = MomentRecord {
            ids: vec![i, j, k],
            value: i_f,
            source: MomentSource::InteriorOracle,
            error_estimate: (i_f - i_c).norm(),
        };
        let gap = (boundary.value - interior.value).norm();
        let agree = gap <= boundary.error_estimate + interior.error_estimate;
        out.push(GreenCheck { boundary, interior, gap, agree });
    }
    Ok(out)
}
