//! Scalar fields in one, two and three variables that evaluate on both `f64`
//! and [`Jet`], so every field comes with exact first derivatives.
//!
//! A field is written once as a rule generic over [`Scalar`] and then erased
//! into a cheap, shareable handle ([`ScalarField1`], [`ScalarField2`],
//! [`ScalarField3`]).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::jet::{Jet, Scalar, P3};

/// A rule `w ↦ g(w)` on three-space, generic over the number type.
pub trait Rule3: Send + Sync + fmt::Debug + 'static {
    fn eval<T: Scalar>(&self, w: [T; 3]) -> T;
}

/// A rule `t ↦ g(t)` on the line.
pub trait Rule1: Send + Sync + fmt::Debug + 'static {
    fn eval<T: Scalar>(&self, t: T) -> T;
}

/// A rule `(y, z) ↦ g(y, z)`.
pub trait Rule2: Send + Sync + fmt::Debug + 'static {
    fn eval<T: Scalar>(&self, y: T, z: T) -> T;
}

trait Dyn3: Send + Sync + fmt::Debug {
    fn value(&self, w: P3) -> f64;
    fn jet(&self, w: [Jet; 3]) -> Jet;
}

trait Dyn1: Send + Sync + fmt::Debug {
    fn value(&self, t: f64) -> f64;
    fn jet(&self, t: Jet) -> Jet;
}

trait Dyn2: Send + Sync + fmt::Debug {
    fn value(&self, y: f64, z: f64) -> f64;
    fn jet(&self, y: Jet, z: Jet) -> Jet;
}

#[derive(Debug)]
struct Erased<R>(R);

impl<R: Rule3> Dyn3 for Erased<R> {
    fn value(&self, w: P3) -> f64 {
        self.0.eval(w)
    }
    fn jet(&self, w: [Jet; 3]) -> Jet {
        self.0.eval(w)
    }
}

impl<R: Rule1> Dyn1 for Erased<R> {
    fn value(&self, t: f64) -> f64 {
        self.0.eval(t)
    }
    fn jet(&self, t: Jet) -> Jet {
        self.0.eval(t)
    }
}

impl<R: Rule2> Dyn2 for Erased<R> {
    fn value(&self, y: f64, z: f64) -> f64 {
        self.0.eval(y, z)
    }
    fn jet(&self, y: Jet, z: Jet) -> Jet {
        self.0.eval(y, z)
    }
}

/// Jet-evaluable scalar field on three-space.
#[derive(Clone, Debug)]
pub struct ScalarField3(Arc<dyn Dyn3>);

/// Jet-evaluable scalar field on the line.
#[derive(Clone, Debug)]
pub struct ScalarField1(Arc<dyn Dyn1>);

/// Jet-evaluable scalar field of `(y, z)`.
#[derive(Clone, Debug)]
pub struct ScalarField2(Arc<dyn Dyn2>);

impl ScalarField3 {
    pub fn new<R: Rule3>(rule: R) -> Self {
        ScalarField3(Arc::new(Erased(rule)))
    }
    pub fn zero() -> Self {
        Self::new(Poly3::default())
    }
    pub fn value(&self, w: P3) -> f64 {
        self.0.value(w)
    }
    pub fn jet(&self, w: [Jet; 3]) -> Jet {
        self.0.jet(w)
    }
    /// Value and gradient at `w`.
    pub fn grad(&self, w: P3) -> (f64, [f64; 3]) {
        let j = self.0.jet(Jet::point(w));
        (j.v, j.g)
    }
}

impl ScalarField1 {
    pub fn new<R: Rule1>(rule: R) -> Self {
        ScalarField1(Arc::new(Erased(rule)))
    }
    pub fn value(&self, t: f64) -> f64 {
        self.0.value(t)
    }
    pub fn jet(&self, t: Jet) -> Jet {
        self.0.jet(t)
    }
    pub fn deriv(&self, t: f64) -> f64 {
        self.0.jet(Jet::var(t, 0)).g[0]
    }
    /// Sampled sup of `|g|` on `[a, b]`.
    pub fn sup_on(&self, a: f64, b: f64, n: usize) -> f64 {
        (0..n)
            .map(|i| self.value(a + (b - a) * i as f64 / (n - 1) as f64).abs())
            .fold(0.0, f64::max)
    }
}

impl ScalarField2 {
    pub fn new<R: Rule2>(rule: R) -> Self {
        ScalarField2(Arc::new(Erased(rule)))
    }
    pub fn value(&self, y: f64, z: f64) -> f64 {
        self.0.value(y, z)
    }
    pub fn jet(&self, y: Jet, z: Jet) -> Jet {
        self.0.jet(y, z)
    }
    /// Value and `(∂_y, ∂_z)`.
    pub fn grad(&self, y: f64, z: f64) -> (f64, f64, f64) {
        let j = self.0.jet(Jet::var(y, 1), Jet::var(z, 2));
        (j.v, j.g[1], j.g[2])
    }
}

/// One term `coef · x^a y^b z^c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub pow: [u32; 3],
}

/// Polynomial in `(x, y, z)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly3 {
    pub terms: Vec<Monomial>,
}

impl Poly3 {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Poly3 { terms }
    }
    pub fn term(coef: f64, a: u32, b: u32, c: u32) -> Monomial {
        Monomial {
            coef,
            pow: [a, b, c],
        }
    }
    /// `b · z`.
    pub fn linear_z(b: f64) -> Self {
        Poly3::new(vec![Poly3::term(b, 0, 0, 1)])
    }
}

impl Rule3 for Poly3 {
    fn eval<T: Scalar>(&self, w: [T; 3]) -> T {
        let mut acc = T::from_f64(0.0);
        for m in &self.terms {
            let mut t = T::from_f64(m.coef);
            for i in 0..3 {
                if m.pow[i] > 0 {
                    t = t * w[i].powi(m.pow[i] as i32);
                }
            }
            acc = acc + t;
        }
        acc
    }
}

/// Polynomial `Σ c_j t^j`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly1 {
    pub coeffs: Vec<f64>,
}

impl Rule1 for Poly1 {
    fn eval<T: Scalar>(&self, t: T) -> T {
        let mut acc = T::from_f64(0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * t + *c;
        }
        acc
    }
}

/// `amp · sin(freq · t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sine1 {
    pub amp: f64,
    pub freq: f64,
}

impl Rule1 for Sine1 {
    fn eval<T: Scalar>(&self, t: T) -> T {
        (t * self.freq).sin() * self.amp
    }
}

/// Polynomial `Σ coef · y^a z^b`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly2 {
    /// `(coef, a, b)` triples.
    pub terms: Vec<(f64, u32, u32)>,
}

impl Rule2 for Poly2 {
    fn eval<T: Scalar>(&self, y: T, z: T) -> T {
        let mut acc = T::from_f64(0.0);
        for &(c, a, b) in &self.terms {
            let mut t = T::from_f64(c);
            if a > 0 {
                t = t * y.powi(a as i32);
            }
            if b > 0 {
                t = t * z.powi(b as i32);
            }
            acc = acc + t;
        }
        acc
    }
}

/// `η(C y − z) + C x`.
#[derive(Clone, Debug)]
pub struct ExampleNDelta {
    pub eta: ScalarField1,
    pub c: f64,
}

impl Rule3 for ExampleNDelta {
    fn eval<T: Scalar>(&self, w: [T; 3]) -> T {
        let t = w[1] * self.c - w[2];
        eval1(&self.eta, t) + w[0] * self.c
    }
}

/// Sum of two fields.
#[derive(Clone, Debug)]
pub struct Sum3(pub ScalarField3, pub ScalarField3);

impl Rule3 for Sum3 {
    fn eval<T: Scalar>(&self, w: [T; 3]) -> T {
        eval3(&self.0, w) + eval3(&self.1, w)
    }
}

/// Evaluates an erased one-variable field inside a generic rule.
pub fn eval1<T: Scalar>(f: &ScalarField1, t: T) -> T {
    let tv = t.value();
    let j = f.jet(Jet::var(tv, 0));
    T::from_f64(j.v) + (t - tv) * j.g[0]
}

/// Evaluates an erased two-variable field inside a generic rule.
pub fn eval2<T: Scalar>(f: &ScalarField2, y: T, z: T) -> T {
    let (yv, zv) = (y.value(), z.value());
    let (v, dy, dz) = f.grad(yv, zv);
    T::from_f64(v) + (y - yv) * dy + (z - zv) * dz
}

/// Evaluates an erased three-variable field inside a generic rule.
pub fn eval3<T: Scalar>(f: &ScalarField3, w: [T; 3]) -> T {
    let p = [w[0].value(), w[1].value(), w[2].value()];
    let (v, g) = f.grad(p);
    T::from_f64(v) + (w[0] - p[0]) * g[0] + (w[1] - p[1]) * g[1] + (w[2] - p[2]) * g[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly3_jet_matches_hand_derivative() {
        let p = ScalarField3::new(Poly3::new(vec![
            Poly3::term(0.3, 1, 1, 0),
            Poly3::term(-0.2, 0, 0, 2),
        ]));
        let (v, g) = p.grad([0.5, -0.4, 0.1]);
        assert!((v - (0.3 * 0.5 * -0.4 - 0.2 * 0.01)).abs() < 1e-16);
        assert!((g[0] - 0.3 * -0.4).abs() < 1e-16);
        assert!((g[1] - 0.3 * 0.5).abs() < 1e-16);
        assert!((g[2] + 0.04).abs() < 1e-16);
    }

    #[test]
    fn nested_fields_keep_exact_gradients() {
        let eta = ScalarField1::new(Sine1 {
            amp: 0.1,
            freq: 1.0,
        });
        let d = ScalarField3::new(ExampleNDelta { eta, c: 0.02 });
        let w = [0.3, 0.7, -0.05];
        let (v, g) = d.grad(w);
        let t: f64 = 0.02 * 0.7 + 0.05;
        assert!((v - (0.1 * t.sin() + 0.02 * 0.3)).abs() < 1e-16);
        assert!((g[0] - 0.02).abs() < 1e-16);
        assert!((g[1] - 0.02 * 0.1 * t.cos()).abs() < 1e-16);
        assert!((g[2] + 0.1 * t.cos()).abs() < 1e-16);
    }
}
