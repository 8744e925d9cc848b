mod common;

use deep_lsd::basis::{gram_schmidt, MeanVector};
use deep_lsd::lsd::{classify_lsd, cumulative_topn, decompose, rank_order, reconstruct};
use deep_lsd::operators::{renormalize, rotation};
use deep_lsd::tensor::dot;
use deep_lsd::SeededRng;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn qr_span_residual(m: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let cols: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| rng.normal::<f64>()).collect()).collect();
    let means: Vec<MeanVector> = cols
        .iter()
        .enumerate()
        .map(|(k, v)| MeanVector {
            label: k % 3,
            set_index: k / 3 + 1,
            values: v.clone(),
        })
        .collect();
    let basis = gram_schmidt(&means, m as f64, 3).unwrap();
    let a = DMatrix::from_fn(m, m, |i, j| cols[j][i]);
    let q = a.qr().q();
    let mut worst = 0.0f64;
    for k in 0..m {
        let u: Vec<f64> = basis.vector(k).iter().map(|x| x / (m as f64).sqrt()).collect();
        // component of u outside span(q_0..q_k)
        let mut r = u.clone();
        for j in 0..=k {
            let qj: Vec<f64> = q.column(j).iter().copied().collect();
            let p = dot(&qj, &u);
            for (ri, qi) in r.iter_mut().zip(&qj) {
                *ri -= p * qi;
            }
        }
        worst = worst.max(dot(&r, &r).sqrt());
    }
    worst
}

#[test]
fn gram_schmidt_spans_match_qr() {
    for seed in 0..5 {
        let r = qr_span_residual(6, seed);
        assert!(r <= 1e-10, "seed {seed}: residual {r:e}");
    }
}

#[test]
fn decomposition_matches_linear_solve() {
    let m = 30;
    let basis = common::random_basis(m, 10, 3);
    let x = DMatrix::from_fn(m, m, |i, k| basis.vector(k)[i]);
    let lu = x.lu();
    let mut rng = SeededRng::new(11);
    for _ in 0..20 {
        let z: Vec<f64> = (0..m).map(|_| rng.normal::<f64>()).collect();
        let c = lu.solve(&nalgebra::DVector::from_vec(z.clone())).unwrap();
        let d = decompose(&z, &basis).unwrap();
        for (a, b) in d.coefficients.iter().zip(c.iter()) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn nearly_collinear_inputs_stay_orthogonal() {
    let m = 10;
    let means: Vec<MeanVector> = (0..m)
        .map(|k| MeanVector {
            label: k,
            set_index: 1,
            values: (0..m).map(|j| 1.0 + if j == k { 1e-6 } else { 0.0 }).collect(),
        })
        .collect();
    let b = gram_schmidt(&means, m as f64, m).unwrap();
    assert!(b.orthogonality_defect() <= 1e-9, "{:e}", b.orthogonality_defect());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn completeness_and_parseval(seed in any::<u64>(), zseed in any::<u64>()) {
        let basis = common::random_basis(20, 10, seed);
        let mut rng = SeededRng::new(zseed);
        let z: Vec<f64> = (0..20).map(|_| rng.normal::<f64>()).collect();
        let d = decompose(&z, &basis).unwrap();
        let r = reconstruct(&d, &basis, 20).unwrap();
        let err: f64 = r.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-6 * dot(&z, &z).sqrt());
        let parseval = 20.0 * dot(&d.coefficients, &d.coefficients);
        prop_assert!((parseval - dot(&z, &z)).abs() <= 1e-6 * dot(&z, &z));
    }

    #[test]
    fn rank_order_is_sorted_permutation(c in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let order = rank_order(&c);
        let mut seen = order.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..c.len()).collect::<Vec<_>>());
        for w in order.windows(2) {
            prop_assert!(c[w[0]].abs() > c[w[1]].abs() || (c[w[0]].abs() == c[w[1]].abs() && w[0] < w[1]));
        }
    }

    #[test]
    fn lsd_label_is_scale_invariant(seed in any::<u64>(), s in 1e-3f64..1e3) {
        let basis = common::random_basis(20, 10, 5);
        let mut rng = SeededRng::new(seed);
        let z: Vec<f64> = (0..20).map(|_| rng.normal::<f64>()).collect();
        let scaled: Vec<f64> = z.iter().map(|v| v * s).collect();
        prop_assert_eq!(classify_lsd(&z, &basis).unwrap().label, classify_lsd(&scaled, &basis).unwrap().label);
    }

    #[test]
    fn renormalize_is_idempotent(z in prop::collection::vec(-10.0f64..10.0, 2..50)) {
        prop_assume!(dot(&z, &z) > 1e-6);
        let once = renormalize(&z).unwrap();
        let twice = renormalize(&once).unwrap();
        let m = z.len() as f64;
        prop_assert!((dot(&once, &once) - m).abs() <= 1e-12 * m);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn cumulative_is_monotone(counts in prop::collection::vec(0u64..50, 1..30)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let curve = cumulative_topn(&counts);
        for w in curve.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert_eq!(*curve.last().unwrap(), 1.0);
    }

    #[test]
    fn rotation_angles_add(theta in -3.0f64..3.0, d1 in -1.5f64..1.5, d2 in -1.5f64..1.5) {
        let basis = common::random_basis(10, 5, 9);
        let (s, c) = theta.sin_cos();
        let u: Vec<f64> = basis.vector(2).iter().zip(basis.vector(7)).map(|(a, b)| c * a + s * b).collect();
        let two = rotation(&basis, 2, 7, theta + d1, d2).unwrap()
            .apply(&rotation(&basis, 2, 7, theta, d1).unwrap().apply(&u).unwrap()).unwrap();
        let one = rotation(&basis, 2, 7, theta, d1 + d2).unwrap().apply(&u).unwrap();
        for (a, b) in two.iter().zip(&one) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}
