//! Independent oracles and frozen reference values.
//!
//! The logistic cascade oracle locates the superstable parameters of
//! `x ↦ 1 − a x²` directly and never touches the fixed-point solver; it is
//! itself checked against the published value of the scaling. The frozen
//! values were produced by this crate and are checked at tolerances
//! far above round-off so that only a behavioural change trips them.

use std::sync::OnceLock;

use renorm_core::cantor::tips;
use renorm_core::field::{ScalarField1, ScalarField3, Sine1};
use renorm_core::hmap3::make_example_n;
use renorm_core::renorm::{RenormCascade, StraighteningSolve};
use renorm_core::unimodal::{solve_fixed_point, superstable_scaling_estimates, FixedPointResult};
use renorm_core::universal::{estimate_b2, q_function};

fn fixed_point() -> &'static FixedPointResult {
    static F: OnceLock<FixedPointResult> = OnceLock::new();
    F.get_or_init(|| solve_fixed_point(14, 1e-10).unwrap())
}

fn example_n(depth: usize) -> RenormCascade {
    let eta = ScalarField1::new(Sine1 {
        amp: 0.1,
        freq: 1.0,
    });
    let m = make_example_n(
        eta,
        0.02,
        fixed_point().fstar.clone(),
        ScalarField3::zero(),
        0.1,
    )
    .unwrap();
    RenormCascade::build(m, depth, StraighteningSolve::default()).unwrap()
}

#[test]
fn logistic_superstable_parameters_accumulate() {
    let est = superstable_scaling_estimates(12).unwrap();
    let last = *est.last().unwrap();
    assert!((last - est[est.len() - 2]).abs() < 1e-5);
    // Published Feigenbaum scaling 1/α with α = 2.502907875...
    assert!((last + 1.0 / 2.502_907_875_095_892).abs() < 1e-5);
}

#[test]
fn fixed_point_matches_logistic_oracle() {
    let fp = fixed_point();
    let oracle = *superstable_scaling_estimates(12).unwrap().last().unwrap();
    assert!((fp.sigma - oracle).abs() < 1e-3, "{} vs {oracle}", fp.sigma);
    assert!(fp.residual <= 1e-10);
}

#[test]
fn fixed_point_matches_published_coefficients() {
    let published = [
        1.0,
        -1.527_632_997_0,
        0.104_815_194_8,
        0.026_705_670_7,
        -0.003_527_411_9,
    ];
    let c = fixed_point().fstar.coeffs();
    for (i, p) in published.iter().enumerate() {
        assert!((c[i] - p).abs() < 1e-9, "coefficient {i}: {} vs {p}", c[i]);
    }
    assert!((fixed_point().sigma + 0.399_535_280_523_112_5).abs() < 1e-12);
}

#[test]
fn renormalizing_fstar_returns_fstar() {
    let fp = fixed_point();
    let (g, s) = fp.fstar.renormalize1d().unwrap();
    assert!(g.sup_distance(&fp.fstar, 256) <= 1e-12);
    assert!((s - fp.sigma).abs() <= 1e-12);
}

#[test]
fn example_n_frozen_q_functions() {
    let c = example_n(4);
    let frozen = [
        0.018_972_566_615_362_372,
        0.000_859_731_910_275_691_7,
        -3.449_379_741_102_771e-6,
        1.380_011_909_421_599_7e-10,
    ];
    for (k, q) in frozen.iter().enumerate() {
        let got = q_function(&c, k, 0.3).unwrap();
        assert!(
            (got - q).abs() <= 1e-8 * q.abs(),
            "q_{k}(0.3) = {got} vs {q}"
        );
    }
}

#[test]
fn example_n_b2_is_the_z_contraction() {
    let c = example_n(4);
    let t = tips(&c).unwrap();
    let est = estimate_b2(&c, &t, 4).unwrap();
    assert!((est.b2 - 0.1).abs() <= 1e-12);
    for r in &est.rows {
        assert!((r.average - 0.1).abs() <= 1e-12 && (r.tip - 0.1).abs() <= 1e-12);
    }
}
