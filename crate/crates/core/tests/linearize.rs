//! Linearized DtN maps against direct solves, plus symmetry and scaling.

use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use semilinear_inverse::linearize::{first_linearization, linearization_oracle, mth_linearization, EpsStencil};
use semilinear_inverse::semilinear::{CoefficientPreset, ForwardModel, NonlinearCoefficients};
use semilinear_inverse::{BoundaryTrace, Domain, DomainConfig};

fn model(q: CoefficientPreset, v: &[(usize, CoefficientPreset)]) -> ForwardModel {
    let d = Arc::new(Domain::build(&DomainConfig::disk(24)).unwrap());
    let coeffs = NonlinearCoefficients::from_presets(&d, &q, v, 5).unwrap();
    ForwardModel::new(d, coeffs).unwrap()
}

fn mode(d: &Domain, k: f64, phase: f64) -> BoundaryTrace {
    BoundaryTrace::from_fn(d, &d.full_boundary(), |s, _, _| Complex64::new((k * s + phase).cos(), 0.0))
}

fn sup_diff(a: &BoundaryTrace, b: &BoundaryTrace) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn second_linearization_is_symmetric(k1 in 1u32..4, k2 in 1u32..4, p in 0.0f64..3.0) {
        let m = model(CoefficientPreset::Affine { c0: 1.0, cx: 0.5, cy: -0.3 }, &[]);
        let d = m.domain();
        let (f, g) = (mode(d, k1 as f64, p), mode(d, k2 as f64, 0.0));
        let st = EpsStencil::for_order(2);
        let a = mth_linearization(&m, &[f.clone(), g.clone()], &st).unwrap();
        let b = mth_linearization(&m, &[g, f], &st).unwrap();
        prop_assert!(sup_diff(&a.output, &b.output) <= a.total_error() + b.total_error());
    }

    #[test]
    fn first_linearization_is_linear(scale in 0.2f64..3.0, k in 1u32..5) {
        let m = model(CoefficientPreset::Constant { value: 1.0 }, &[(3, CoefficientPreset::Constant { value: 1.0 })]);
        let d = m.domain();
        let f = mode(d, k as f64, 0.1);
        let st = EpsStencil::for_order(1);
        let a = first_linearization(&m, &f, &st).unwrap();
        let b = first_linearization(&m, &f.scaled(Complex64::new(scale, 0.0)), &st).unwrap();
        let scaled = a.output.scaled(Complex64::new(scale, 0.0));
        prop_assert!(sup_diff(&scaled, &b.output) <= 1e-6 * scaled.sup_norm());
    }
}

#[test]
fn polarization_matches_direct_chain_for_orders_two_to_four() {
    let m = model(
        CoefficientPreset::GaussianBump { amplitude: 1.0, center: [0.1, 0.0], width: 0.5 },
        &[(3, CoefficientPreset::Constant { value: 1.0 }), (4, CoefficientPreset::Affine { c0: 1.0, cx: 0.0, cy: 0.5 })],
    );
    let d = m.domain();
    let f: Vec<BoundaryTrace> = (1..=4).map(|k| mode(d, k as f64, 0.2 * k as f64)).collect();
    for order in 2..=4 {
        let rec = mth_linearization(&m, &f[..order], &EpsStencil::for_order(order)).unwrap();
        let direct = linearization_oracle(&m, &f[..order]).unwrap();
        let gap = sup_diff(&rec.output, &direct);
        assert!(gap <= 1e-4 * direct.sup_norm(), "order {order}: {gap:e} vs {:e}", direct.sup_norm());
    }
}

#[test]
fn quadratic_term_vanishes_without_q() {
    let m = model(CoefficientPreset::Zero, &[(3, CoefficientPreset::Constant { value: 2.0 })]);
    let d = m.domain();
    let rec = mth_linearization(&m, &[mode(d, 1.0, 0.0), mode(d, 2.0, 0.0)], &EpsStencil::for_order(2)).unwrap();
    let first = first_linearization(&m, &mode(d, 1.0, 0.0), &EpsStencil::for_order(1)).unwrap();
    assert!(rec.output.sup_norm() <= 1e-8 * first.output.sup_norm());
}

#[test]
fn linearization_is_deterministic() {
    let m = model(CoefficientPreset::Constant { value: 1.0 }, &[]);
    let d = m.domain();
    let f = [mode(d, 1.0, 0.0), mode(d, 3.0, 1.0)];
    let a = mth_linearization(&m, &f, &EpsStencil::for_order(2)).unwrap();
    let b = mth_linearization(&m, &f, &EpsStencil::for_order(2)).unwrap();
    assert_eq!(a.output.values(), b.output.values());
}
