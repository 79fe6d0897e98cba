//! Property tests for the invariants that hold for every admissible input.

use proptest::prelude::*;

use renorm_core::cantor::{Letter, PieceSample, Word};
use renorm_core::field::{Poly3, ScalarField3};
use renorm_core::geometry::{holder_bound, horizontal_overlap, unbounded_geometry_criterion};
use renorm_core::jet::P3;
use renorm_core::unimodal::{solve_fixed_point, Branch, UnimodalMap};
use renorm_core::universal::line_fit;

const SIGMA: f64 = -0.3995352805231125;

fn fstar() -> &'static UnimodalMap {
    static F: std::sync::OnceLock<UnimodalMap> = std::sync::OnceLock::new();
    F.get_or_init(|| solve_fixed_point(14, 1e-10).unwrap().fstar)
}

fn point() -> impl Strategy<Value = P3> {
    [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0]
}

fn cloud() -> impl Strategy<Value = Vec<P3>> {
    prop::collection::vec(point(), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn word_index_round_trip(n in 1usize..16, raw in any::<u64>()) {
        let index = (raw as usize) & ((1usize << n) - 1);
        let w = Word::from_index(index, n);
        prop_assert_eq!(w.len(), n);
        prop_assert_eq!(w.index(), index);
        prop_assert_eq!(Word::parse(&w.to_string()).unwrap(), w.clone());
        prop_assert_eq!(w.successor().index(), (index + 1) % (1usize << n));
    }

    #[test]
    fn word_first_letter_is_least_significant(n in 1usize..12, raw in any::<u32>()) {
        let index = (raw as usize) & ((1usize << n) - 1);
        let w = Word::from_index(index, n);
        prop_assert_eq!(w.letter(0).bit(), index & 1);
        let child = w.child(Letter::C);
        prop_assert_eq!(child.index(), index + (1usize << n));
    }

    #[test]
    fn inverse_branches_invert_fstar(y in SIGMA..1.0) {
        let f = fstar();
        for b in [Branch::Plus, Branch::Minus] {
            let x = f.inverse_branch(y, b).unwrap();
            prop_assert!(x.abs() <= 1.0 + 1e-12);
            prop_assert!((f.eval(x).unwrap() - y).abs() <= 1e-13);
            prop_assert_eq!(x >= 0.0, matches!(b, Branch::Plus));
        }
    }

    #[test]
    fn polynomial_jets_match_central_differences(
        coefs in prop::collection::vec(-1.0f64..1.0, 1..5),
        pows in prop::collection::vec([0u32..4, 0u32..4, 0u32..4], 5),
        w in [-0.9f64..0.9, -0.9f64..0.9, -0.9f64..0.9],
    ) {
        let terms = coefs.iter().zip(&pows).map(|(c, p)| Poly3::term(*c, p[0], p[1], p[2])).collect();
        let field = ScalarField3::new(Poly3::new(terms));
        let (v, g) = field.grad(w);
        prop_assert_eq!(v, field.value(w));
        let h = 1e-5;
        for i in 0..3 {
            let mut a = w;
            let mut b = w;
            a[i] += h;
            b[i] -= h;
            let fd = (field.value(a) - field.value(b)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-7 * (1.0 + g[i].abs()), "axis {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn holder_bound_increases_in_b1_tilde(b1 in 1e-6f64..0.999, s in 0.01f64..0.98, ds in 1e-4f64..0.01) {
        let lo = b1 * (1.0 - s - ds).max(1e-9);
        let hi = b1 * (1.0 - s);
        let a = holder_bound(b1, lo).unwrap();
        let b = holder_bound(b1, hi).unwrap();
        prop_assert!(a > 0.5 && b < 1.0);
        prop_assert!(a < b);
    }

    #[test]
    fn holder_bound_rejects_outside_domain(b1 in -1.0f64..2.0, bt in -1.0f64..2.0) {
        let ok = 0.0 < bt && bt < b1 && b1 < 1.0;
        prop_assert_eq!(holder_bound(b1, bt).is_ok(), ok);
    }

    #[test]
    fn criterion_recovers_constructing_pair(k in 0usize..6, m in 1usize..40) {
        let b1 = SIGMA.abs().powf(m as f64 / 2f64.powi(k as i32));
        prop_assume!(b1 < 1.0);
        let rows = unbounded_geometry_criterion(b1, SIGMA, k).unwrap();
        let (kk, n, gap) = rows[k];
        prop_assert_eq!(kk, k);
        prop_assert_eq!(n, k + m);
        prop_assert!(gap <= 1e-10 * m as f64);
    }

    #[test]
    fn criterion_gap_is_minimal(b1 in 1e-3f64..0.99, k in 0usize..5) {
        let rows = unbounded_geometry_criterion(b1, SIGMA, k).unwrap();
        let (_, n, gap) = rows[k];
        let ls = SIGMA.abs().ln();
        let target = 2f64.powi(k as i32) * b1.ln();
        for m in 1..(n - k + 3) {
            prop_assert!(gap <= (target - m as f64 * ls).abs() + 1e-12);
        }
    }

    #[test]
    fn overlap_is_symmetric_and_reflexive(a in cloud(), b in cloud()) {
        let pa = PieceSample::from_points(Word::empty(), a);
        let pb = PieceSample::from_points(Word::empty(), b);
        prop_assert_eq!(horizontal_overlap(&pa, &pb), horizontal_overlap(&pb, &pa));
        let (flag, width) = horizontal_overlap(&pa, &pa);
        prop_assert_eq!(width, pa.hull.extent(0));
        prop_assert_eq!(flag, pa.hull.extent(0) > 0.0);
        prop_assert!(pa.diameter >= pa.hull.extent(0) - 1e-15);
    }

    #[test]
    fn line_fit_recovers_lines(slope in -5.0f64..5.0, icpt in -5.0f64..5.0, n in 2usize..12) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| slope * x + icpt).collect();
        let (s, i) = line_fit(&xs, &ys).unwrap();
        prop_assert!((s - slope).abs() <= 1e-10 && (i - icpt).abs() <= 1e-10);
    }
}
