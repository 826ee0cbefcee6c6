//! Moments, least squares, reconstruction and density on small grids.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use semilinear_inverse::elliptic::assemble_laplacian;
use semilinear_inverse::harmonic::{harmonic_polynomial, Parity};
use semilinear_inverse::inverse::{
    all_tuples, boundary_moments, density_basis, density_check, interior_q_moments, random_tuples, recover_q,
    tikhonov_solve, BasisKind, ReconstructionOptions, TestBank, TestSpec,
};
use semilinear_inverse::linearize::EpsStencil;
use semilinear_inverse::semilinear::{CoefficientPreset, ForwardModel, NonlinearCoefficients};
use semilinear_inverse::{BoundaryArc, BoundaryMask, Domain, DomainConfig, Field};

fn model(n: usize, q: CoefficientPreset) -> ForwardModel {
    let d = Arc::new(Domain::build(&DomainConfig::disk(n)).unwrap());
    let coeffs = NonlinearCoefficients::from_presets(&d, &q, &[], 5).unwrap();
    ForwardModel::new(d, coeffs).unwrap()
}

fn bank(m: &ForwardModel, degree: usize) -> TestBank {
    let arc = BoundaryArc::full(m.domain().shape());
    TestBank::build(m.domain(), m.laplacian(), &TestSpec::polynomials(degree), arc, &m.linear).unwrap()
}

fn binom(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_tuples_are_seeded_sorted_and_in_range(
        n in 1usize..12, t in 1usize..12, order in 2usize..5, count in 0usize..60, seed in any::<u64>()
    ) {
        let a = random_tuples(n, t, order, count, seed);
        prop_assert_eq!(&a, &random_tuples(n, t, order, count, seed));
        prop_assert_eq!(a.len(), count);
        for tup in &a {
            prop_assert_eq!(tup.len(), order + 1);
            prop_assert!(tup[..order].windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(tup[..order].iter().all(|&i| i < n) && tup[order] < t);
        }
    }

    #[test]
    fn all_tuples_counts_multisets(n in 1usize..8, t in 1usize..5, order in 2usize..5) {
        prop_assert_eq!(all_tuples(n, t, order).len(), binom(n + order - 1, order) * t);
    }

    #[test]
    fn tikhonov_recovers_consistent_systems(
        entries in prop::collection::vec(-1.0f64..1.0, 40), x in prop::collection::vec(-2.0f64..2.0, 4)
    ) {
        let mut a = DMatrix::from_row_slice(10, 4, &entries);
        // keep the system well conditioned
        for i in 0..4 {
            a[(i, i)] += 4.0;
        }
        let b: Vec<f64> = (0..10).map(|i| (0..4).map(|j| a[(i, j)] * x[j]).sum()).collect();
        let r = tikhonov_solve(&a, &b, &[1.0; 10], 0.0, 1e10).unwrap();
        for (got, want) in r.coefficients.iter().zip(&x) {
            prop_assert!((got - want).abs() <= 1e-9);
        }
        prop_assert!(!r.rank_deficient);
    }

    #[test]
    fn tikhonov_norm_shrinks_with_lambda(entries in prop::collection::vec(-1.0f64..1.0, 24)) {
        let a = DMatrix::from_row_slice(8, 3, &entries);
        let b: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let norm = |l: f64| tikhonov_solve(&a, &b, &[1.0; 8], l, 1e14).unwrap().coefficients.iter().map(|c| c * c).sum::<f64>();
        prop_assert!(norm(1e-1) <= norm(1e-3) * (1.0 + 1e-12) + 1e-14);
    }
}

#[test]
fn boundary_and_interior_moments_agree() {
    let m = model(32, CoefficientPreset::GaussianBump { amplitude: 1.0, center: [0.0, 0.1], width: 0.5 });
    let b = bank(&m, 3);
    let tuples = random_tuples(b.len(), b.len(), 2, 40, 3);
    let bd = boundary_moments(&m, &b, &b, &tuples, &EpsStencil::for_order(2)).unwrap();
    let q = m.coefficients().q().to_vec();
    let io = interior_q_moments(m.domain(), &q, &b, &b, &tuples).unwrap();
    let scale = io.iter().map(|r| r.value.norm()).fold(0.0, f64::max);
    for (x, y) in bd.iter().zip(&io) {
        assert_eq!(x.ids, y.ids);
        assert!((x.value - y.value).norm() <= 2e-2 * scale, "{:?}: {} vs {}", x.ids, x.value, y.value);
    }
}

#[test]
fn zero_q_is_recovered_as_zero() {
    let m = model(24, CoefficientPreset::Zero);
    let b = bank(&m, 4);
    let tuples = random_tuples(b.len(), b.len(), 2, 120, 0);
    let moments = boundary_moments(&m, &b, &b, &tuples, &EpsStencil::for_order(2)).unwrap();
    let opts = ReconstructionOptions { fourier_modes: 4, ..Default::default() };
    let r = recover_q(m.domain(), &b, &b, &moments, &opts, Some(&vec![0.0; m.domain().node_count()])).unwrap();
    assert!(r.l2_norm <= 1e-6, "{}", r.l2_norm);
}

#[test]
fn reconstruction_is_deterministic_and_flags_underdetermined_grids() {
    let m = model(16, CoefficientPreset::Constant { value: 1.0 });
    let b = bank(&m, 3);
    let q = m.coefficients().q().to_vec();
    let tuples = random_tuples(b.len(), b.len(), 2, 60, 9);
    let mo = interior_q_moments(m.domain(), &q, &b, &b, &tuples).unwrap();
    let opts = ReconstructionOptions { fourier_modes: 3, ..Default::default() };
    let r1 = recover_q(m.domain(), &b, &b, &mo, &opts, Some(&q)).unwrap();
    let r2 = recover_q(m.domain(), &b, &b, &mo, &opts, Some(&q)).unwrap();
    assert_eq!(r1.values, r2.values);
    let grid = ReconstructionOptions { basis: BasisKind::GridNodal, ..opts };
    if let Ok(r) = recover_q(m.domain(), &b, &b, &mo, &grid, Some(&q)) {
        assert!(r.lsq.rank_deficient);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn density_residuals_never_increase(kx in -3.0f64..3.0, ky in -3.0f64..3.0, half in any::<bool>()) {
        let d = Domain::build(&DomainConfig::disk(20)).unwrap();
        let a = assemble_laplacian(&d);
        let gt = if half { d.arc_mask(BoundaryArc::new(0.0, std::f64::consts::PI)) } else { BoundaryMask::none(d.n_outer()) };
        let basis = density_basis(&d, &a, &gt, 8, &[], &Default::default()).unwrap();
        let target = Field::from_real_fn(&d, |x, y| 1.0 + (kx * x + ky * y).cos());
        let r = density_check(&d, &basis, &target, &[2, 4, 6, 8], 1e12).unwrap();
        prop_assert!(r.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15));
        prop_assert!(r.rank.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn gradient_products_of_x_give_the_area() {
    let d = Domain::build(&DomainConfig::disk(48)).unwrap();
    let x = harmonic_polynomial(&d, 1, Parity::Re).field;
    let (gx, gy) = d.gradient(&x);
    let prod = Field::from_values((0..d.node_count()).map(|n| gx.values()[n] * gx.values()[n] + gy.values()[n] * gy.values()[n]).collect());
    let area = d.integrate_interior(&prod);
    assert!((area - Complex64::new(std::f64::consts::PI, 0.0)).norm() <= 1e-2 * std::f64::consts::PI);
}
