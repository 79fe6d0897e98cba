//! Three-dimensional Hénon-like maps `F(x, y, z) = (f(x) − ε(w), x, δ(w))`.
//!
//! A [`HenonMap3`] wraps an evaluation body. Explicit maps are built from a
//! unimodal part and two [`ScalarField3`]s; renormalized maps (see
//! `renorm`) plug in a body that evaluates the composed return map. In both
//! cases `ε` and `δ` are read back from the Hénon-form identities
//! `ε = f(x) − π_x F` and `δ = π_z F`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{eval2, eval3, ExampleNDelta, Rule3, ScalarField1, ScalarField2, ScalarField3};
use crate::jet::{det3, Jet, Scalar, M3, P3};
use crate::unimodal::{chebyshev_nodes, UnimodalMap};

/// Deferred fit of the one-dimensional part of a map.
type ProfileFit = Box<dyn Fn(&HenonMap3) -> UnimodalMap + Send + Sync>;

pub const DOMAIN_TOL: f64 = 1e-9;
/// Default bound on the size of the perturbations.
pub const EPS_BAR: f64 = 0.1;

/// Number of positive nodes at which the slice `x ↦ π_x F(x, 0, 0)` is
/// sampled for fitting.
pub const SLICE_NODES: usize = 28;

/// Axis-aligned box `[x0,x1] × [y0,y1] × [z0,z1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub lo: P3,
    pub hi: P3,
}

impl Box3 {
    /// `[−1,1]² × [−h,h]`.
    pub fn standard(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidMap(format!(
                "box half-height must be positive, got {h}"
            )));
        }
        Ok(Box3 {
            lo: [-1.0, -1.0, -h],
            hi: [1.0, 1.0, h],
        })
    }

    pub fn contains(&self, w: &P3, tol: f64) -> bool {
        (0..3).all(|i| w[i] >= self.lo[i] - tol && w[i] <= self.hi[i] + tol)
    }

    pub fn center(&self) -> P3 {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }

    /// `n³` lattice points including the faces.
    pub fn lattice(&self, n: usize) -> Vec<P3> {
        let coord = |i: usize, k: usize| {
            if n == 1 {
                0.5 * (self.lo[i] + self.hi[i])
            } else {
                self.lo[i] + (self.hi[i] - self.lo[i]) * k as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    out.push([coord(0, a), coord(1, b), coord(2, c)]);
                }
            }
        }
        out
    }

    pub fn half_height(&self) -> f64 {
        0.5 * (self.hi[2] - self.lo[2])
    }

    /// `n` uniform points of the box from a seeded ChaCha stream.
    pub fn random_points(&self, n: usize, seed: u64) -> Vec<P3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut p = [0.0; 3];
                for (i, c) in p.iter_mut().enumerate() {
                    *c = rng.gen_range(self.lo[i]..=self.hi[i]);
                }
                p
            })
            .collect()
    }
}

/// Evaluation rule of a Hénon-like map: value and full derivative.
pub trait MapBody: Send + Sync + fmt::Debug {
    fn value(&self, w: P3) -> Result<P3>;
    fn jet(&self, w: P3) -> Result<(P3, M3)>;
}

#[derive(Debug)]
struct Explicit {
    f: UnimodalMap,
    eps: ScalarField3,
    delta: ScalarField3,
}

impl MapBody for Explicit {
    fn value(&self, w: P3) -> Result<P3> {
        Ok([
            self.f.value(w[0]) - self.eps.value(w),
            w[0],
            self.delta.value(w),
        ])
    }

    fn jet(&self, w: P3) -> Result<(P3, M3)> {
        let (fx, dfx) = self.f.value_deriv(w[0]);
        let (e, ge) = self.eps.grad(w);
        let (d, gd) = self.delta.grad(w);
        Ok((
            [fx - e, w[0], d],
            [[dfx - ge[0], -ge[1], -ge[2]], [1.0, 0.0, 0.0], gd],
        ))
    }
}

struct Inner {
    body: Arc<dyn MapBody>,
    f: OnceLock<UnimodalMap>,
    /// Builds the one-dimensional part on first use when it is not given.
    fit: Option<ProfileFit>,
    slice: OnceLock<Vec<[f64; 3]>>,
    bx: Box3,
    label: String,
}

/// A Hénon-like map over a cubic box. Cloning is cheap.
#[derive(Clone)]
pub struct HenonMap3(Arc<Inner>);

impl fmt::Debug for HenonMap3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HenonMap3")
            .field("label", &self.0.label)
            .field("box", &self.0.bx)
            .field("body", &self.0.body)
            .finish()
    }
}

impl HenonMap3 {
    pub fn new(f: UnimodalMap, eps: ScalarField3, delta: ScalarField3, bx: Box3) -> Self {
        Self::with_body(
            Arc::new(Explicit {
                f: f.clone(),
                eps,
                delta,
            }),
            Some(f),
            None,
            bx,
            "explicit",
        )
    }

    /// `F(x, y, z) = (f(x), x, 0)`.
    pub fn degenerate(f: UnimodalMap, h: f64) -> Result<Self> {
        Ok(Self::new(
            f,
            ScalarField3::zero(),
            ScalarField3::zero(),
            Box3::standard(h)?,
        ))
    }

    /// Explicit map with the default box `h = max(4‖δ‖, 0.05)`.
    pub fn with_default_box(
        f: UnimodalMap,
        eps: ScalarField3,
        delta: ScalarField3,
    ) -> Result<Self> {
        let h = default_half_height(&delta);
        Ok(Self::new(f, eps, delta, Box3::standard(h)?))
    }

    /// Map from an arbitrary body. `f` is the one-dimensional part if known;
    /// otherwise `fit` produces it lazily.
    pub fn with_body(
        body: Arc<dyn MapBody>,
        f: Option<UnimodalMap>,
        fit: Option<ProfileFit>,
        bx: Box3,
        label: &str,
    ) -> Self {
        let cell = OnceLock::new();
        if let Some(f) = f {
            let _ = cell.set(f);
        }
        HenonMap3(Arc::new(Inner {
            body,
            f: cell,
            fit,
            slice: OnceLock::new(),
            bx,
            label: label.to_string(),
        }))
    }

    pub fn label(&self) -> &str {
        &self.0.label
    }

    pub fn bx(&self) -> &Box3 {
        &self.0.bx
    }

    /// The one-dimensional part.
    pub fn f(&self) -> &UnimodalMap {
        self.0.f.get_or_init(|| match &self.0.fit {
            Some(fit) => fit(self),
            None => unreachable!("map without a one-dimensional part or fitting rule"),
        })
    }

    /// `[x, π_x F(x, 0, 0), π_x F(−x, 0, 0)]` at the positive Chebyshev nodes
    /// of `[−1, 1]`, computed once. Failed evaluations are stored as NaN.
    pub fn slice_samples(&self) -> &[[f64; 3]] {
        self.0.slice.get_or_init(|| {
            chebyshev_nodes(2 * SLICE_NODES)
                .into_iter()
                .take(SLICE_NODES)
                .map(|x| {
                    let at = |x: f64| self.value([x, 0.0, 0.0]).map_or(f64::NAN, |v| v[0]);
                    [x, at(x), at(-x)]
                })
                .collect()
        })
    }

    pub fn body(&self) -> &Arc<dyn MapBody> {
        &self.0.body
    }

    /// Unchecked evaluation.
    pub fn value(&self, w: P3) -> Result<P3> {
        self.0.body.value(w)
    }

    /// Unchecked value and derivative.
    pub fn jet(&self, w: P3) -> Result<(P3, M3)> {
        self.0.body.jet(w)
    }

    fn check(&self, w: &P3) -> Result<()> {
        if self.0.bx.contains(w, DOMAIN_TOL) {
            Ok(())
        } else {
            Err(Error::domain("point outside the box B", w))
        }
    }

    /// `F(w)` for `w ∈ B`.
    pub fn eval_map(&self, w: P3) -> Result<P3> {
        self.check(&w)?;
        self.value(w)
    }

    /// `DF(w)` and `det DF(w)` for `w ∈ B`.
    pub fn jacobian(&self, w: P3) -> Result<(M3, f64)> {
        self.check(&w)?;
        let (_, m) = self.jet(w)?;
        Ok((m, det3(&m)))
    }

    /// `ε(w) = f(x) − π_x F(w)`.
    pub fn eps(&self, w: P3) -> Result<f64> {
        Ok(self.f().value(w[0]) - self.value(w)?[0])
    }

    /// `δ(w) = π_z F(w)`.
    pub fn delta(&self, w: P3) -> Result<f64> {
        Ok(self.value(w)?[2])
    }

    /// Gradient of `ε` read from the derivative of `F`.
    pub fn eps_grad(&self, w: P3) -> Result<[f64; 3]> {
        let (_, m) = self.jet(w)?;
        Ok([self.f().deriv(w[0]) - m[0][0], -m[0][1], -m[0][2]])
    }

    /// Gradient of `δ`.
    pub fn delta_grad(&self, w: P3) -> Result<[f64; 3]> {
        Ok(self.jet(w)?.1[2])
    }

    /// `∂_yε·∂_zδ − ∂_zε·∂_yδ`, the Hénon-form expression of `det DF`.
    pub fn det_from_partials(&self, w: P3) -> Result<f64> {
        let (_, m) = self.jet(w)?;
        let (ey, ez) = (-m[0][1], -m[0][2]);
        Ok(ey * m[2][2] - ez * m[2][1])
    }

    /// `∂_yδ(F(w)) + ∂_zδ(F(w))·∂_xδ(w)`.
    pub fn class_n_residual(&self, w: P3) -> Result<f64> {
        let (fw, m) = self.jet(w)?;
        if !self.0.bx.contains(&fw, DOMAIN_TOL) {
            return Err(Error::domain("F(w) outside the box B", &fw));
        }
        let (_, m1) = self.jet(fw)?;
        Ok(m1[2][1] + m1[2][2] * m[2][0])
    }

    /// Worst escape of `F` on an `n³` lattice of `B` (0 when `F(B) ⊆ B`).
    pub fn lattice_escape(&self, n: usize) -> Result<f64> {
        let bx = self.0.bx;
        let mut worst = 0.0f64;
        for w in bx.lattice(n) {
            let v = self.value(w)?;
            for i in 0..3 {
                worst = worst.max(bx.lo[i] - v[i]).max(v[i] - bx.hi[i]);
            }
        }
        Ok(worst)
    }

    /// `F̃ = Φ ∘ F ∘ Φ⁻¹` with `Φ(w) = (x, y, φ(y, z))`.
    pub fn conjugate(&self, phi: ScalarField2) -> Result<HenonMap3> {
        let bx = self.0.bx;
        // Check invertibility in z on a grid of the (y, z) face.
        for w in bx.lattice(9) {
            let (_, _, dz) = phi.grad(w[1], w[2]);
            if !(dz.abs() >= 1e-6) {
                return Err(Error::InvalidMap(format!(
                    "conjugation not invertible in z: |∂_zφ| = {dz:e} at (y, z) = ({}, {})",
                    w[1], w[2]
                )));
            }
        }
        let image = |w: P3| phi.value(w[1], w[2]);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for w in bx.lattice(9) {
            let z = image(w);
            lo = lo.min(z);
            hi = hi.max(z);
        }
        let h = lo.abs().max(hi.abs()).max(bx.half_height());
        let body = Conjugated {
            base: self.clone(),
            phi,
        };
        let new_box = Box3::standard(h)?;
        Ok(HenonMap3::with_body(
            Arc::new(body),
            Some(self.f().clone()),
            None,
            new_box,
            "conjugated",
        ))
    }
}

/// `h = max(4 sup|δ|, 0.05)`, iterated until the slab contains `δ(B)`.
pub fn default_half_height(delta: &ScalarField3) -> f64 {
    let mut h = 0.05;
    for _ in 0..8 {
        let bx = Box3 {
            lo: [-1.0, -1.0, -h],
            hi: [1.0, 1.0, h],
        };
        let sup = bx
            .lattice(9)
            .iter()
            .map(|w| delta.value(*w).abs())
            .fold(0.0, f64::max);
        let next = (4.0 * sup).max(0.05);
        if (next - h).abs() <= 1e-12 * h {
            break;
        }
        h = next;
    }
    h
}

/// The class-𝒩 example `δ(x, y, z) = η(Cy − z) + Cx`, checked against the
/// perturbation budget `max(‖η‖, |C|) ≤ budget`.
pub fn make_example_n(
    eta: ScalarField1,
    c: f64,
    f: UnimodalMap,
    eps: ScalarField3,
    budget: f64,
) -> Result<HenonMap3> {
    let delta = ScalarField3::new(ExampleNDelta {
        eta: eta.clone(),
        c,
    });
    let h = default_half_height(&delta);
    let reach = c.abs() + h;
    let eta_norm = eta.sup_on(-reach, reach, 257);
    let norm = eta_norm.max(c.abs());
    if norm > budget {
        return Err(Error::NormBudget { norm, budget });
    }
    let map = HenonMap3::new(f, eps, delta, Box3::standard(h)?);
    // The residual vanishes identically; confirm on a fixed sample.
    let mut rng_state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64
    };
    let bx = *map.bx();
    for _ in 0..100 {
        let w = [
            2.0 * next() - 1.0,
            2.0 * next() - 1.0,
            bx.lo[2] + (bx.hi[2] - bx.lo[2]) * next(),
        ];
        let fw = map.value(w)?;
        if !bx.contains(&fw, DOMAIN_TOL) {
            continue;
        }
        let r = map.class_n_residual(w)?;
        if r.abs() > 1e-14 {
            return Err(Error::InvalidMap(format!(
                "class-N residual {r:e} at {w:?}"
            )));
        }
    }
    Ok(map)
}

#[derive(Debug)]
struct Conjugated {
    base: HenonMap3,
    phi: ScalarField2,
}

impl Conjugated {
    /// `ζ` with `φ(y, ζ) = z`, by Newton from `ζ = z`.
    fn zeta(&self, y: f64, z: f64) -> Result<f64> {
        let mut zeta = z;
        for it in 0..60 {
            let (v, _, dz) = self.phi.grad(y, zeta);
            let r = v - z;
            if r.abs() <= 1e-15 * (1.0 + z.abs()) {
                return Ok(zeta);
            }
            let step = r / dz;
            zeta -= step;
            if step.abs() <= 1e-16 * (1.0 + zeta.abs()) || it == 59 {
                let (v, _, _) = self.phi.grad(y, zeta);
                if (v - z).abs() <= 1e-12 {
                    return Ok(zeta);
                }
                return Err(Error::NotConverged {
                    what: "conjugation inverse in z",
                    iters: it + 1,
                    residual: (v - z).abs(),
                });
            }
        }
        unreachable!()
    }

    fn apply<T: Scalar>(&self, w: [T; 3]) -> Result<[T; 3]> {
        let (y, z) = (w[1].value(), w[2].value());
        let z0 = self.zeta(y, z)?;
        let (_, _, dz) = self.phi.grad(y, z0);
        // One implicit-differentiation step carries the derivatives of ζ.
        let zeta = T::from_f64(z0) - (eval2(&self.phi, w[1], T::from_f64(z0)) - w[2]) / dz;
        let inner = [w[0], w[1], zeta];
        let p = [inner[0].value(), inner[1].value(), inner[2].value()];
        let (fp, m) = self.base.jet(p)?;
        let lin = |row: &[f64; 3], v0: f64| {
            T::from_f64(v0)
                + (inner[0] - p[0]) * row[0]
                + (inner[1] - p[1]) * row[1]
                + (inner[2] - p[2]) * row[2]
        };
        let x1 = lin(&m[0], fp[0]);
        let d1 = lin(&m[2], fp[2]);
        let z1 = eval2(&self.phi, w[0], d1);
        Ok([x1, w[0], z1])
    }
}

impl MapBody for Conjugated {
    fn value(&self, w: P3) -> Result<P3> {
        self.apply(w)
    }

    fn jet(&self, w: P3) -> Result<(P3, M3)> {
        let out = self.apply(Jet::point(w))?;
        Ok((
            [out[0].v, out[1].v, out[2].v],
            [out[0].g, out[1].g, out[2].g],
        ))
    }
}

/// `ε(x, y, z) = θ₁ + θ₂ x` added to a base field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineX {
    pub theta: [f64; 2],
}

impl Rule3 for AffineX {
    fn eval<T: Scalar>(&self, w: [T; 3]) -> T {
        w[0] * self.theta[1] + self.theta[0]
    }
}

/// Sum of an explicit field and an affine-in-x shift.
pub fn shifted(base: &ScalarField3, theta: [f64; 2]) -> ScalarField3 {
    #[derive(Debug)]
    struct Shifted(ScalarField3, AffineX);
    impl Rule3 for Shifted {
        fn eval<T: Scalar>(&self, w: [T; 3]) -> T {
            eval3(&self.0, w) + self.1.eval(w)
        }
    }
    ScalarField3::new(Shifted(base.clone(), AffineX { theta }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Poly2, Poly3, Sine1};

    fn fq() -> UnimodalMap {
        UnimodalMap::quadratic(1.5)
    }

    #[test]
    fn degenerate_map_examples() {
        let m = HenonMap3::degenerate(fq(), 0.05).unwrap();
        let v = m.eval_map([0.0, 0.3, 0.02]).unwrap();
        assert_eq!(v, [1.0, 0.0, 0.0]);
        let (_, det) = m.jacobian([0.2, 0.1, 0.0]).unwrap();
        assert_eq!(det, 0.0);
        assert!(matches!(
            m.eval_map([0.0, 0.0, 0.2]),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn example_n_matches_hand_formula() {
        let eta = ScalarField1::new(Sine1 {
            amp: 0.1,
            freq: 1.0,
        });
        let m = make_example_n(eta, 0.02, fq(), ScalarField3::zero(), EPS_BAR).unwrap();
        let w = [0.4, -0.3, 0.01];
        let v = m.eval_map(w).unwrap();
        let hand = 0.1 * (0.02 * -0.3 - 0.01f64).sin() + 0.02 * 0.4;
        assert!((v[2] - hand).abs() < 1e-16);
        assert_eq!(v[1], 0.4);
    }

    #[test]
    fn example_n_budget_is_enforced() {
        let eta = ScalarField1::new(Sine1 {
            amp: 0.1,
            freq: 1.0,
        });
        let r = make_example_n(eta, 0.5, fq(), ScalarField3::zero(), EPS_BAR);
        assert!(matches!(r, Err(Error::NormBudget { .. })));
    }

    #[test]
    fn trivial_extension_det_and_residual() {
        let eps = ScalarField3::new(Poly3::new(vec![
            Poly3::term(0.05, 0, 1, 0),
            Poly3::term(0.02, 1, 1, 0),
        ]));
        let m = HenonMap3::with_default_box(fq(), eps, ScalarField3::new(Poly3::linear_z(0.1)))
            .unwrap();
        let w = [0.3, -0.2, 0.01];
        let (_, det) = m.jacobian(w).unwrap();
        assert!((det - 0.1 * (0.05 + 0.02 * 0.3)).abs() < 1e-16);
        assert!(m.class_n_residual(w).unwrap().abs() < 1e-16);
    }

    #[test]
    fn monomial_delta_residual_by_hand() {
        // δ = 0.01·y·z: ∂_yδ(F w) + ∂_zδ(F w)·∂_xδ(w) = 0.01·z₁ + 0.01·y₁·0.
        let m = HenonMap3::new(
            fq(),
            ScalarField3::zero(),
            ScalarField3::new(Poly3::new(vec![Poly3::term(0.01, 0, 1, 1)])),
            Box3::standard(0.05).unwrap(),
        );
        let w = [0.0, 0.5, 0.02];
        let fw = m.value(w).unwrap();
        let hand = 0.01 * fw[2];
        assert!((m.class_n_residual(w).unwrap() - hand).abs() < 1e-18);
        assert!(hand != 0.0);
    }

    #[test]
    fn identity_conjugation_is_identity() {
        let eta = ScalarField1::new(Sine1 {
            amp: 0.1,
            freq: 1.0,
        });
        let m = make_example_n(eta, 0.02, fq(), ScalarField3::zero(), EPS_BAR).unwrap();
        let c = m
            .conjugate(ScalarField2::new(Poly2 {
                terms: vec![(1.0, 0, 1)],
            }))
            .unwrap();
        for w in m.bx().lattice(4) {
            let a = m.value(w).unwrap();
            let b = c.value(w).unwrap();
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn conjugation_rejects_degenerate_phi() {
        let m = HenonMap3::degenerate(fq(), 0.05).unwrap();
        let r = m.conjugate(ScalarField2::new(Poly2 {
            terms: vec![(1.0, 1, 0)],
        }));
        assert!(matches!(r, Err(Error::InvalidMap(_))));
    }
}
