//! Partial Dirichlet-to-Neumann map and its mixed ε-derivatives.
//!
//! The `m`-th linearization `∂_{ε₁}⋯∂_{εₘ} Λ(Σ εₗfₗ)|₀` is extracted by
//! polarization over the corners of an ε-box and Richardson extrapolation in
//! the box size. Independently, [`linearization_chain`] solves the hierarchy
//! of linear problems obtained by expanding `u` in the εₗ, which gives the
//! same quantity without any finite differences.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::trace_key;
use crate::domain::{BoundaryTrace, Field};
use crate::elliptic::harmonic_lift;
use crate::error::{Error, Result};
use crate::semilinear::ForwardModel;

/// Largest supported linearization order.
pub const MAX_ORDER: usize = 5;
/// Relative solve accuracy assumed when bounding cancellation error.
const SOLVE_ROUNDOFF: f64 = 1e-13;
/// Richardson correction tolerated relative to the unextrapolated values.
const CONSISTENCY_TOL: f64 = 0.5;
/// Largest admissible ratio of successive level differences (`1/4` and `1/2`
/// are expected for the central and one-sided stencils).
const DECAY_TOL: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilMode {
    /// One-sided differences over the subsets of slots, `O(ε)` per level.
    ForwardPolyFit,
    /// Signed sums over `{±ε}^m`, `O(ε²)` per level.
    Central,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsStencil {
    pub base_eps: f64,
    /// Number of halvings of `base_eps` combined by extrapolation.
    pub richardson_levels: usize,
    pub mode: StencilMode,
}

impl Default for EpsStencil {
    fn default() -> Self {
        EpsStencil { base_eps: 1e-2, richardson_levels: 2, mode: StencilMode::Central }
    }
}

impl EpsStencil {
    /// Default stencil for an order-`m` derivative. Above second order the
    /// finer Richardson level is dominated by amplified solver roundoff, so a
    /// single halving is used.
    pub fn for_order(m: usize) -> Self {
        EpsStencil { richardson_levels: if m <= 2 { 2 } else { 1 }, ..Default::default() }
    }

    pub fn validate(&self, delta_data: f64) -> Result<()> {
        if !(self.base_eps > 0.0 && self.base_eps <= delta_data / 4.0 + 1e-15) {
            return Err(Error::InvalidConfig(format!(
                "base_eps must lie in (0, {}], got {}",
                delta_data / 4.0,
                self.base_eps
            )));
        }
        if !(1..=3).contains(&self.richardson_levels) {
            return Err(Error::InvalidConfig(format!(
                "richardson_levels must lie in 1..=3, got {}",
                self.richardson_levels
            )));
        }
        Ok(())
    }
}

/// One evaluated mixed derivative of the DtN map.
#[derive(Clone, Debug)]
pub struct LinearizedDtNRecord {
    /// Identifiers of the differentiated input slots.
    pub multi_index: Vec<usize>,
    pub inputs: Vec<BoundaryTrace>,
    /// Derivative on `Γ₂` (zero elsewhere).
    pub output: BoundaryTrace,
    pub stencil: EpsStencil,
    /// `‖T_final − T_previous‖∞` from the Richardson table.
    pub error_estimate: f64,
    /// Bound on floating-point cancellation in the polarization sums.
    pub roundoff_estimate: f64,
    pub cancellation_warning: bool,
}

impl LinearizedDtNRecord {
    pub fn order(&self) -> usize {
        self.inputs.len()
    }

    /// Combined error bound used to weight downstream moments.
    pub fn total_error(&self) -> f64 {
        self.error_estimate + self.roundoff_estimate
    }
}

fn check_input_support(model: &ForwardModel, f: &BoundaryTrace) -> Result<()> {
    let d = model.domain();
    if f.len() != d.n_outer() {
        return Err(Error::DomainMismatch { expected: d.n_outer(), got: f.len() });
    }
    let leak = f.leak_outside(d.gamma1());
    if leak > 0.0 {
        return Err(Error::SupportViolation(leak));
    }
    Ok(())
}

/// `Λf = ∂_ν u_f` on `Γ₂` for data `f` supported in `Γ₁`. With an obstacle,
/// `u_f = 0` on its boundary.
pub fn dtn(model: &ForwardModel, f: &BoundaryTrace) -> Result<BoundaryTrace> {
    check_input_support(model, f)?;
    let d = model.domain();
    let key = model.cache.as_ref().map(|_| trace_key(&model.digest(), f));
    if let (Some(cache), Some(key)) = (&model.cache, &key) {
        if let Some(values) = cache.get(key) {
            if values.len() == d.n_outer() {
                return Ok(BoundaryTrace::new(values, d.gamma2().clone()));
            }
        }
    }
    let out = if f.sup_norm() == 0.0 {
        BoundaryTrace::zeros(d.gamma2().clone())
    } else {
        let rep = model.solve(f)?;
        d.normal_derivative(&rep.u, d.gamma2())?
    };
    if let (Some(cache), Some(key)) = (&model.cache, &key) {
        cache.put(key, out.values())?;
    }
    Ok(out)
}

/// Groups identical traces so repeated slots share corner evaluations.
fn distinct_slots(f_list: &[BoundaryTrace]) -> (Vec<&BoundaryTrace>, Vec<usize>) {
    let mut distinct: Vec<&BoundaryTrace> = Vec::new();
    let mut slot_group = Vec::with_capacity(f_list.len());
    for f in f_list {
        match distinct.iter().position(|g| *g == f) {
            Some(i) => slot_group.push(i),
            None => {
                slot_group.push(distinct.len());
                distinct.push(f);
            }
        }
    }
    (distinct, slot_group)
}

/// `(weight, integer coefficient per distinct trace)` for each corner.
fn corners(mode: StencilMode, m: usize, slot_group: &[usize], n_groups: usize) -> Vec<(f64, Vec<i64>)> {
    let mut out = Vec::new();
    for bits in 0..(1usize << m) {
        let mut coeff = vec![0i64; n_groups];
        let mut weight = 1.0;
        for l in 0..m {
            let on = bits >> l & 1 == 1;
            match mode {
                StencilMode::Central => {
                    let s = if on { 1 } else { -1 };
                    coeff[slot_group[l]] += s;
                    weight *= s as f64;
                }
                StencilMode::ForwardPolyFit => {
                    if on {
                        coeff[slot_group[l]] += 1;
                    } else {
                        weight = -weight;
                    }
                }
            }
        }
        out.push((weight, coeff));
    }
    out
}

/// Mixed derivative `∂_{ε₁}⋯∂_{εₘ} Λ(Σ εₗfₗ)` at `ε = 0`, `m ≤ 5`.
pub fn mth_linearization(model: &ForwardModel, f_list: &[BoundaryTrace], stencil: &EpsStencil) -> Result<LinearizedDtNRecord> {
    let m = f_list.len();
    if m == 0 || m > MAX_ORDER {
        return Err(Error::UnsupportedOrder(m));
    }
    stencil.validate(model.newton.delta_data)?;
    for f in f_list {
        check_input_support(model, f)?;
    }
    let d = model.domain();
    let (distinct, slot_group) = distinct_slots(f_list);
    let corner_list = corners(stencil.mode, m, &slot_group, distinct.len());
    let levels = stencil.richardson_levels;

    // unique (level, coefficient vector) evaluations; Λ(0) = 0 is not solved
    let mut unique: BTreeMap<(usize, Vec<i64>), usize> = BTreeMap::new();
    let mut jobs: Vec<(usize, Vec<i64>)> = Vec::new();
    for level in 0..=levels {
        for (_, c) in &corner_list {
            if c.iter().all(|&x| x == 0) {
                continue;
            }
            unique.entry((level, c.clone())).or_insert_with(|| {
                jobs.push((level, c.clone()));
                jobs.len() - 1
            });
        }
    }
    let evaluations: Vec<BoundaryTrace> = jobs
        .par_iter()
        .map(|(level, c)| {
            let eps = stencil.base_eps / f64::powi(2.0, *level as i32);
            let terms: Vec<(Complex64, &BoundaryTrace)> = c
                .iter()
                .zip(&distinct)
                .filter(|(k, _)| **k != 0)
                .map(|(k, f)| (Complex64::new(*k as f64 * eps, 0.0), *f))
                .collect();
            dtn(model, &BoundaryTrace::linear_combination(&terms))
        })
        .collect::<Result<_>>()?;

    let n = d.n_outer();
    let mut table: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(levels + 1);
    let mut corner_scale: f64 = 0.0;
    for level in 0..=levels {
        let eps = stencil.base_eps / f64::powi(2.0, level as i32);
        let denom = match stencil.mode {
            StencilMode::Central => f64::powi(2.0 * eps, m as i32),
            StencilMode::ForwardPolyFit => f64::powi(eps, m as i32),
        };
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for (w, c) in &corner_list {
            if let Some(&idx) = unique.get(&(level, c.clone())) {
                let val = &evaluations[idx];
                corner_scale = corner_scale.max(val.sup_norm() / denom);
                for (a, v) in acc.iter_mut().zip(val.values()) {
                    *a += v * *w;
                }
            }
        }
        acc.iter_mut().for_each(|a| *a /= denom);
        table.push(vec![acc]);
    }
    let p = match stencil.mode {
        StencilMode::Central => 2,
        StencilMode::ForwardPolyFit => 1,
    };
    for j in 1..=levels {
        for k in 1..=j {
            let factor = f64::powi(2.0, (p * k) as i32) - 1.0;
            let next: Vec<Complex64> = table[j][k - 1]
                .iter()
                .zip(&table[j - 1][k - 1])
                .map(|(a, b)| a + (a - b) / factor)
                .collect();
            table[j].push(next);
        }
    }
    let best = table[levels][levels].clone();
    let prev = &table[levels][levels - 1];
    let error_estimate = best.iter().zip(prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let roundoff_estimate = SOLVE_ROUNDOFF * corner_scale * corner_list.len() as f64 * 2.0;
    let output = BoundaryTrace::new(best, d.gamma2().clone());
    let signal = output.sup_norm();
    let cancellation_warning = roundoff_estimate > 0.1 * signal;
    if cancellation_warning {
        log::debug!(
            "order-{m} linearization: cancellation bound {roundoff_estimate:.2e} exceeds 10% of signal {signal:.2e}"
        );
    }
    // a vanishing derivative is legitimate, so the correction is compared with
    // the raw difference quotients rather than with the extrapolated value
    let sup = |v: &[Complex64]| v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let diff = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    let raw_scale = table.iter().map(|row| sup(&row[0])).fold(signal, f64::max);
    let limit = (CONSISTENCY_TOL * raw_scale).max(10.0 * roundoff_estimate);
    if error_estimate > limit {
        return Err(Error::StencilInconsistent { estimate: error_estimate, limit });
    }
    if levels >= 2 {
        let d1 = diff(&table[levels][0], &table[levels - 1][0]);
        let d0 = diff(&table[levels - 1][0], &table[levels - 2][0]);
        let limit = (DECAY_TOL * d0).max(10.0 * roundoff_estimate);
        if d1 > limit {
            return Err(Error::StencilInconsistent { estimate: d1, limit });
        }
    }
    Ok(LinearizedDtNRecord {
        multi_index: (0..m).collect(),
        inputs: f_list.to_vec(),
        output,
        stencil: *stencil,
        error_estimate,
        roundoff_estimate,
        cancellation_warning,
    })
}

pub fn first_linearization(model: &ForwardModel, f: &BoundaryTrace, stencil: &EpsStencil) -> Result<LinearizedDtNRecord> {
    mth_linearization(model, std::slice::from_ref(f), stencil)
}

pub fn second_linearization(
    model: &ForwardModel,
    f1: &BoundaryTrace,
    f2: &BoundaryTrace,
    stencil: &EpsStencil,
) -> Result<LinearizedDtNRecord> {
    mth_linearization(model, &[f1.clone(), f2.clone()], stencil)
}

pub fn third_linearization(
    model: &ForwardModel,
    f1: &BoundaryTrace,
    f2: &BoundaryTrace,
    f3: &BoundaryTrace,
    stencil: &EpsStencil,
) -> Result<LinearizedDtNRecord> {
    mth_linearization(model, &[f1.clone(), f2.clone(), f3.clone()], stencil)
}

/// Set partitions of the bits of `mask` into exactly `k` nonempty blocks.
pub(crate) fn partitions(mask: usize, k: usize) -> Vec<Vec<usize>> {
    if mask == 0 {
        return if k == 0 { vec![vec![]] } else { vec![] };
    }
    if k == 0 || (mask.count_ones() as usize) < k {
        return vec![];
    }
    let low = mask & mask.wrapping_neg();
    let rest = mask ^ low;
    let mut out = Vec::new();
    // the block containing the lowest element: `low` plus any submask of `rest`
    let mut sub = rest;
    loop {
        let block = low | sub;
        for mut tail in partitions(rest ^ sub, k - 1) {
            tail.insert(0, block);
            out.push(tail);
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & rest;
    }
    out
}

/// Coefficients `w_S` of `u(Σ εₗfₗ) = Σ_S ε^S w_S + …` for every nonempty
/// subset `S` of the slots (index = bitmask), from direct linear solves:
/// `w_{{l}}` is the harmonic lift of `fₗ` and for `|S| ≥ 2`
/// `−Δw_S = −source_S`, `w_S = 0` on the boundary.
pub fn linearization_chain(model: &ForwardModel, f_list: &[BoundaryTrace]) -> Result<Vec<Field>> {
    Ok(build_chain(model, f_list, true)?.0)
}

type Gradients = Vec<(Field, Field)>;

fn build_chain(model: &ForwardModel, f_list: &[BoundaryTrace], with_top: bool) -> Result<(Vec<Field>, Gradients)> {
    let m = f_list.len();
    if m == 0 || m > MAX_ORDER {
        return Err(Error::UnsupportedOrder(m));
    }
    let d = model.domain();
    let full = (1usize << m) - 1;
    let mut w: Vec<Field> = vec![Field::zeros(d.node_count()); 1 << m];
    let mut grads: Gradients = vec![(Field::zeros(0), Field::zeros(0)); 1 << m];
    let mut masks: Vec<usize> = (1..=full).filter(|&s| with_top || s != full).collect();
    masks.sort_by_key(|s| (s.count_ones(), *s));
    let zero_bnd = vec![Complex64::new(0.0, 0.0); d.node_count() - d.n_interior()];
    for s in masks {
        if s.count_ones() == 1 {
            let l = s.trailing_zeros() as usize;
            w[s] = harmonic_lift(model.laplacian(), &f_list[l], &model.linear)?;
        } else {
            let rhs: Vec<Complex64> =
                chain_source(model, &w, &grads, s)[..d.n_interior()].iter().map(|v| -v).collect();
            w[s] = model.laplacian().solve_with_boundary(&rhs, &zero_bnd, &model.linear)?;
        }
        grads[s] = d.gradient(&w[s]);
    }
    Ok((w, grads))
}

/// Coefficient of `ε^S` in the nonlinear term at every node, from the
/// lower-order chain members.
fn chain_source(model: &ForwardModel, w: &[Field], grads: &[(Field, Field)], s: usize) -> Vec<Complex64> {
    let d = model.domain();
    let c = model.coefficients();
    let n = d.node_count();
    let mut src = vec![Complex64::new(0.0, 0.0); n];
    if c.q().iter().any(|&x| x != 0.0) {
        let mut a = (s - 1) & s;
        while a != 0 {
            let b = s ^ a;
            let (ax, ay) = &grads[a];
            let (bx, by) = &grads[b];
            for i in 0..n {
                src[i] += (ax.values()[i] * bx.values()[i] + ay.values()[i] * by.values()[i]) * c.q()[i];
            }
            a = (a - 1) & s;
        }
    }
    for k in 3..=c.k_trunc().min(s.count_ones() as usize) {
        let vk = c.v(k);
        if vk.iter().all(|&x| x == 0.0) {
            continue;
        }
        for part in partitions(s, k) {
            for i in 0..n {
                let prod: Complex64 = part.iter().map(|&b| w[b].values()[i]).product();
                src[i] += prod * vk[i];
            }
        }
    }
    src
}

/// Top-order source of the chain: the coefficient of `ε₁⋯εₘ` in the
/// nonlinear term, evaluated with the model's coefficients.
pub fn chain_top_source(model: &ForwardModel, f_list: &[BoundaryTrace]) -> Result<Field> {
    let d = model.domain();
    if f_list.len() < 2 {
        return Ok(Field::zeros(d.node_count()));
    }
    let (w, grads) = build_chain(model, f_list, false)?;
    Ok(Field::from_values(chain_source(model, &w, &grads, w.len() - 1)))
}

/// `∂_ν w_{1…m}` on `Γ₂` from the direct chain: the finite-difference-free
/// value of the `m`-th linearization.
pub fn linearization_oracle(model: &ForwardModel, f_list: &[BoundaryTrace]) -> Result<BoundaryTrace> {
    let w = linearization_chain(model, f_list)?;
    let d = model.domain();
    d.normal_derivative(w.last().unwrap(), d.gamma2())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts_are_stirling_numbers() {
        // S(4, k) = 1, 7, 6, 1 ; S(5, 3) = 25
        let counts: Vec<usize> = (1..=4).map(|k| partitions(0b1111, k).len()).collect();
        assert_eq!(counts, vec![1, 7, 6, 1]);
        assert_eq!(partitions(0b11111, 3).len(), 25);
        for p in partitions(0b10110, 2) {
            assert_eq!(p.iter().fold(0, |a, b| a | b), 0b10110);
            assert_eq!(p[0] & p[1], 0);
        }
    }

    #[test]
    fn central_corners_cancel_lower_orders() {
        // Σ weight · Π coefficients^α vanishes unless every slot has an odd power
        let cs = corners(StencilMode::Central, 3, &[0, 1, 2], 3);
        let total: f64 = cs.iter().map(|(w, c)| w * (c[0] * c[1] * c[2]) as f64).sum();
        assert_eq!(total, 8.0);
        let lower: f64 = cs.iter().map(|(w, c)| w * (c[0] * c[0] * c[1]) as f64).sum();
        assert_eq!(lower, 0.0);
        let fw = corners(StencilMode::ForwardPolyFit, 2, &[0, 0], 1);
        let total: f64 = fw.iter().map(|(w, c)| w * (c[0] * c[0]) as f64).sum();
        assert_eq!(total, 2.0);
    }
}
