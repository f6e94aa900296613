//! Property suites for the determinant kernels and the metric layer.

use proptest::prelude::*;

use neckcalib::geometry::{jlt_neck, BasePoint, Geometry};
use neckcalib::linalg::{
    cauchy_binet_check, det, enumerate_subsets, minor, weighted_minor_expansion, DenseMatrix,
    IndexSubset,
};

fn matrix_strategy(max_k: usize, max_n: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_k, 0..=max_n).prop_flat_map(move |(k, extra)| {
        let n = (k + extra).min(max_n).max(k);
        prop::collection::vec(-1.0f64..1.0, k * n)
            .prop_map(move |data| DenseMatrix::new(k, n, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cauchy_binet_identity(a in matrix_strategy(5, 10)) {
        let (lhs, rhs) = cauchy_binet_check(&a).unwrap();
        let tol = 1e-9 * lhs.abs().max(1.0);
        prop_assert!((lhs - rhs).abs() <= tol, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn weighted_expansion_equals_weighted_gram(
        a in matrix_strategy(5, 10),
        wseed in prop::collection::vec(0.1f64..3.0, 10),
    ) {
        let w = &wseed[..a.cols()];
        let value = weighted_minor_expansion(&a, w).unwrap();
        let oracle = det(&a.weighted_gram(w).unwrap()).unwrap();
        let tol = 1e-9 * oracle.abs().max(1.0);
        prop_assert!((value - oracle).abs() <= tol, "{value} vs {oracle}");
    }
}

proptest! {
    #[test]
    fn unit_weights_reduce_to_cauchy_binet_sum(a in matrix_strategy(4, 8)) {
        let ones = vec![1.0; a.cols()];
        let value = weighted_minor_expansion(&a, &ones).unwrap();
        let (_, rhs) = cauchy_binet_check(&a).unwrap();
        prop_assert!((value - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn minor_is_multilinear_in_rows(
        a in matrix_strategy(4, 8),
        row in 0usize..4,
        c in -4.0f64..4.0,
    ) {
        let row = row % a.rows();
        let subset: Vec<usize> = (1..=a.rows()).collect();
        let s = IndexSubset::new(subset, a.cols()).unwrap();
        let base = minor(&a, &s).unwrap();
        let mut scaled = a.clone();
        for j in 0..a.cols() {
            scaled.set(row, j, c * a.get(row, j));
        }
        let got = minor(&scaled, &s).unwrap();
        let tol = 1e-12 * (c * base).abs().max(1.0);
        prop_assert!((got - c * base).abs() <= tol);
    }

    #[test]
    fn permutation_determinants_are_exact_signs(perm in prop::sample::subsequence((0..8usize).collect::<Vec<_>>(), 8).prop_shuffle()) {
        let n = perm.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &j) in perm.iter().enumerate() {
            m.set(i, j, 1.0);
        }
        let mut inversions = 0;
        for i in 0..n {
            for j in i + 1..n {
                if perm[i] > perm[j] {
                    inversions += 1;
                }
            }
        }
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert_eq!(det(&m).unwrap(), sign);
    }

    #[test]
    fn subset_enumeration_is_lexicographic_and_complete(n in 1usize..=12, k in 0usize..=6) {
        let k = k.min(n);
        let subsets: Vec<Vec<usize>> = enumerate_subsets(n, k)
            .unwrap()
            .map(|s| s.indices().to_vec())
            .collect();
        let binom = {
            let mut c = 1u64;
            for i in 0..k as u64 {
                c = c * (n as u64 - i) / (i + 1);
            }
            c
        };
        prop_assert_eq!(subsets.len() as u64, binom);
        for w in subsets.windows(2) {
            prop_assert!(w[0] < w[1], "not lexicographic: {:?} then {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn orientation_sign_antisymmetric_and_scale_invariant(
        seed in 0u64..1000,
        scale in 0.05f64..20.0,
    ) {
        let g = Geometry::Sphere { n: 4 };
        let mut rng = neckcalib::rng::stream(seed, 0);
        let p = g.sample_point(&mut rng);
        let basis = g.tangent_basis(&p).unwrap();
        let mut vectors = basis.vectors.clone();
        let sign = g.orientation_sign(&p, &vectors).unwrap();
        prop_assert_eq!(sign, 1);
        for x in vectors[1].iter_mut() {
            *x *= scale;
        }
        prop_assert_eq!(g.orientation_sign(&p, &vectors).unwrap(), 1);
        vectors.swap(0, 2);
        prop_assert_eq!(g.orientation_sign(&p, &vectors).unwrap(), -1);
    }

    #[test]
    fn base_volume_minimized_at_q0_for_jlt(
        a1 in 0.3f64..4.0,
        a2 in 0.3f64..4.0,
        a3 in 0.3f64..4.0,
        q in -3.0f64..3.0,
        seed in 0u64..500,
    ) {
        let spec = jlt_neck(&[a1, a2, a3], 3.0).unwrap();
        let (q0, cw) = spec.find_q0(33, 1e-8).unwrap();
        prop_assert!(cw);
        let mut rng = neckcalib::rng::stream(seed, 1);
        use rand::Rng;
        let xs: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let v0 = spec.base_volume_form(&q0, &xs, 1).unwrap().abs();
        let vq = spec.base_volume_form(&[q], &xs, 1).unwrap().abs();
        prop_assert!(v0 <= vq + 1e-12, "{v0} > {vq}");
    }

    #[test]
    fn sphere_points_are_unit(seed in 0u64..2000) {
        let p = neckcalib::geometry::sphere_point(5, &mut neckcalib::rng::stream(seed, 0));
        let norm2: f64 = p.iter().map(|x| x * x).sum();
        prop_assert!((norm2 - 1.0).abs() <= 1e-12);
        let bp = BasePoint::ambient(p);
        let g = Geometry::Sphere { n: 5 };
        prop_assert!(g.membership_residual(&bp).unwrap() <= 1e-12);
    }
}
