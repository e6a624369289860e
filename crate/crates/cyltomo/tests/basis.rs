mod common;

use cyltomo::basis::BasisSet;
use cyltomo::quadrature::{uniform_nodes, Quadrature};
use proptest::prelude::*;

fn gram_error(basis: &BasisSet) -> f64 {
    let n = basis.len();
    let mut worst: f64 = 0.0;
    for m in 0..n {
        for k in 0..n {
            let g =
                common::integrate(|z| basis.evaluate(m, z).unwrap() * basis.evaluate(k, z).unwrap(), 0.0, basis.b(), 4);
            let target = if m == k { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

#[test]
fn first_function_is_normalised_exponential() {
    let b = BasisSet::build(1, 1.0).unwrap();
    let e2 = std::f64::consts::E.powi(2);
    let expected = 1.0 / ((e2 - 1.0) / 2.0).sqrt();
    assert!((b.evaluate(0, 0.0).unwrap() - expected).abs() < 1e-14);
    assert!((b.evaluate(0, 0.0).unwrap() - 0.5595).abs() < 1e-4);
    let q = common::integrate(|z| (2.0 * z).exp(), 0.0, 1.0, 1);
    assert!((q - (e2 - 1.0) / 2.0).abs() < 1e-13);
}

#[test]
fn ratio_to_origin_is_exponential() {
    let b = BasisSet::build(3, 1.0).unwrap();
    for z in [0.1, 0.5, 0.9] {
        let r = b.evaluate(0, z).unwrap() / b.evaluate(0, 0.0).unwrap();
        assert!((r - f64::exp(z)).abs() < 1e-14);
    }
}

#[test]
fn gram_identity_and_triangular_a_at_n8() {
    let basis = BasisSet::build(8, 1.0).unwrap();
    assert!(gram_error(&basis) < 1e-10, "gram error {}", gram_error(&basis));
    for m in 0..8 {
        for k in 0..8 {
            let quad = common::integrate(
                |z| basis.evaluate(m, z).unwrap() * basis.evaluate_derivative(k, z).unwrap(),
                0.0,
                1.0,
                4,
            );
            assert!((quad - basis.a(m, k)).abs() < 1e-10, "a[{m}][{k}]");
            if m > k {
                assert!(basis.a(m, k).abs() < 1e-10);
            }
        }
        assert!((basis.a(m, m) - 1.0).abs() < 1e-10);
    }
    assert!((basis.det_a() - 1.0).abs() < 1e-8);
}

#[test]
fn derivative_matches_central_difference() {
    let basis = BasisSet::build(6, 1.0).unwrap();
    let h = 1e-3;
    let f = |n: usize, z: f64| basis.evaluate(n, z).unwrap();
    for i in 0..10 {
        let z = 0.05 + 0.09 * i as f64;
        for n in 0..6 {
            // Fourth-order central difference.
            let fd = (8.0 * (f(n, z + h) - f(n, z - h)) - (f(n, z + 2.0 * h) - f(n, z - 2.0 * h))) / (12.0 * h);
            let d = basis.evaluate_derivative(n, z).unwrap();
            assert!((fd - d).abs() < 1e-8 * d.abs().max(1.0), "n {n} z {z}: {fd} vs {d}");
        }
    }
}

#[test]
fn projection_recovers_basis_function() {
    let basis = BasisSet::build(4, 1.0).unwrap();
    let quad = Quadrature::simpson(&uniform_nodes(0.0, 1.0, 200));
    let f: Vec<f64> = quad.nodes.iter().map(|z| basis.evaluate(2, *z).unwrap()).collect();
    let c = basis.project(&quad, &f).unwrap();
    for (s, v) in c.iter().enumerate() {
        let t = if s == 2 { 1.0 } else { 0.0 };
        assert!((v - t).abs() < 1e-6);
    }
    let zero = basis.project(&quad, &vec![0.0; quad.len()]).unwrap();
    assert!(zero.iter().all(|v| *v == 0.0));
    let coarse = Quadrature::simpson(&uniform_nodes(0.0, 1.0, 5));
    assert!(basis.project(&coarse, &[0.0; 6]).is_err());
}

#[test]
fn json_export_contains_matrix() {
    let basis = BasisSet::build(3, 1.0).unwrap();
    let j = basis.to_json();
    assert_eq!(j["N"], 3);
    assert_eq!(j["A"].as_array().unwrap().len(), 3);
    let back: BasisSet = serde_json::from_value(serde_json::to_value(&basis).unwrap()).unwrap();
    assert_eq!(back, basis);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn invariants_hold_for_random_b(n in 1usize..7, b in 0.3f64..2.5) {
        let basis = BasisSet::build(n, b).unwrap();
        for m in 0..n {
            prop_assert!((basis.a(m, m) - 1.0).abs() < 1e-10);
            for k in 0..m {
                prop_assert!(basis.a(m, k).abs() < 1e-10);
            }
        }
        prop_assert!(gram_error(&basis) < 1e-10);
        prop_assert!((basis.det_a() - 1.0).abs() < 1e-8);
    }
}
