//! Randomized invariants of the float reference, the integer kernels and the
//! circuit lowering, each checked against a direct computation.

use proptest::prelude::*;

use inhibitor::attention::{self, AttentionConfig};
use inhibitor::fhe::{self, LoweringConfig};
use inhibitor::quant::{self, QTensor};
use inhibitor::tensor::{self, Tensor2D};
use inhibitor::Mechanism;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor2D> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor2D::from_vec(rows, cols, d).unwrap())
}

fn qkv() -> impl Strategy<Value = (Tensor2D, Tensor2D, Tensor2D)> {
    (1usize..6, 1usize..5).prop_flat_map(|(n, d)| (matrix(n, d), matrix(n, d), matrix(n, d)))
}

fn close(a: &Tensor2D, b: &Tensor2D, tol: f64) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn transpose_is_involution(a in matrix(3, 5)) {
        prop_assert_eq!(a.transpose().transpose(), a.clone());
    }

    #[test]
    fn matmul_transpose_rule((a, b) in (1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(r, k, c)| (matrix(r, k), matrix(k, c)))) {
        let lhs = tensor::matmul(&a, &b).unwrap().transpose();
        let rhs = tensor::matmul(&b.transpose(), &a.transpose()).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn cdist_is_a_metric(a in matrix(4, 3)) {
        let z = tensor::cdist_manhattan(&a, &a).unwrap();
        for i in 0..4 {
            prop_assert_eq!(z.row(i)[i], 0.0);
            for j in 0..4 {
                prop_assert!(z.row(i)[j] >= 0.0);
                prop_assert_eq!(z.row(i)[j], z.row(j)[i]);
                for k in 0..4 {
                    prop_assert!(z.row(i)[j] <= z.row(i)[k] + z.row(k)[j] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(a in matrix(3, 6)) {
        let s = tensor::softmax_rows(&a);
        for i in 0..3 {
            prop_assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.row(i).iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn fused_inhibition_matches_naive((_, k, v) in qkv(), alpha in 0.0f64..1.0) {
        let z = attention::shift_scores(&attention::manhattan_scores(&k, &k, 1.5).unwrap(), alpha).unwrap();
        prop_assert!(close(&attention::inhibit_fused(&v, &z).unwrap(), &attention::inhibit_naive(&v, &z).unwrap(), 1e-12));
        prop_assert!(close(
            &attention::signed_inhibit_fused(&v, &z).unwrap(),
            &attention::signed_inhibit_naive(&v, &z).unwrap(),
            1e-12
        ));
    }

    #[test]
    fn inhibition_is_bounded_by_positive_mass((q, k, v) in qkv()) {
        let cfg = AttentionConfig::new(q.rows(), q.cols(), Mechanism::Inhibitor);
        let h = attention::inhibitor_attention(&q, &k, &v, &cfg).unwrap();
        let cap = tensor::colsum(&tensor::relu(&v));
        for i in 0..h.rows() {
            for c in 0..h.cols() {
                prop_assert!(h.row(i)[c] >= -1e-12 && h.row(i)[c] <= cap.data()[c] + 1e-12);
            }
        }
    }

    #[test]
    fn dotprod_output_is_convex_combination((q, k, v) in qkv()) {
        let h = attention::dotprod_attention(&q, &k, &v, q.cols()).unwrap();
        for c in 0..v.cols() {
            let col: Vec<f64> = (0..v.rows()).map(|j| v.row(j)[c]).collect();
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
            for i in 0..h.rows() {
                prop_assert!(h.row(i)[c] >= lo - 1e-12 && h.row(i)[c] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn quantize_round_trip_within_half_lsb(a in matrix(3, 4), s in -10i32..-2) {
        let q = quant::quantize(&a, 16, s).unwrap();
        let back = quant::dequantize(&q);
        prop_assert!(close(&a, &back, 2f64.powi(s) / 2.0 + 1e-15));
    }

    #[test]
    fn quantize_is_monotone(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let t = Tensor2D::from_vec(1, 2, vec![lo, hi]).unwrap();
        let q = quant::quantize(&t, 8, -6).unwrap();
        prop_assert!(q.get(0, 0) <= q.get(0, 1));
    }

    #[test]
    fn integer_fused_matches_integer_naive(
        (n, d, vals) in (1usize..5, 1usize..5).prop_flat_map(|(n, d)| (Just(n), Just(d), prop::collection::vec(-127i32..=127, 3 * n * d))),
        alpha in 0i32..64,
        g in 0u32..3,
    ) {
        let mk = |i: usize| QTensor::from_vec(n, d, vals[i * n * d..(i + 1) * n * d].to_vec(), -4, 8).unwrap();
        let (q, k, v) = (mk(0), mk(1), mk(2));
        let mut z = quant::q_manhattan_raw(&q, &k).unwrap();
        quant::q_shift_scores(&mut z, alpha, g, i32::MAX);
        prop_assert_eq!(quant::q_inhibit_fused(&v, &z, n).unwrap(), quant::q_inhibit_naive(&v, &z, n).unwrap());
    }

    #[test]
    fn circuit_matches_direct_integer_inhibition(xs in prop::collection::vec(-4i64..=3, 12)) {
        let c = fhe::build_circuit(Mechanism::Inhibitor, &LoweringConfig::new(2, 2, 3)).unwrap();
        let got = fhe::interpret(&c, &xs).unwrap();
        let (q, k, v) = (&xs[0..4], &xs[4..8], &xs[8..12]);
        for i in 0..2 {
            for col in 0..2 {
                let want: i64 = (0..2)
                    .map(|j| {
                        let z: i64 = (0..2).map(|e| (q[i * 2 + e] - k[j * 2 + e]).abs()).sum();
                        (v[j * 2 + col] - z).max(0)
                    })
                    .sum();
                prop_assert_eq!(got[i * 2 + col], want);
            }
        }
    }
}
