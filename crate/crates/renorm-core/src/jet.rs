//! First-order jets in three variables and small fixed-size linear algebra.
//!
//! A [`Jet`] carries a value together with its gradient with respect to a point
//! `w = (x, y, z)`. Arithmetic on jets applies the chain rule, so any expression
//! written against the [`Scalar`] trait yields exact first derivatives (up to
//! round-off) when evaluated on jets.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// A point of three-space.
pub type P3 = [f64; 3];
/// A 3x3 matrix stored row-major.
pub type M3 = [[f64; 3]; 3];

/// Value plus gradient with respect to `(x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
}

impl Jet {
    pub const fn cst(v: f64) -> Self {
        Jet { v, g: [0.0; 3] }
    }

    /// The coordinate function `w_i` evaluated at `v`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; 3];
        g[i] = 1.0;
        Jet { v, g }
    }

    /// Seeds all three coordinates of `w` with the identity derivative.
    pub fn point(w: P3) -> [Jet; 3] {
        [Jet::var(w[0], 0), Jet::var(w[1], 1), Jet::var(w[2], 2)]
    }

    fn scale(self, a: f64, dv: f64) -> Jet {
        Jet {
            v: a,
            g: [dv * self.g[0], dv * self.g[1], dv * self.g[2]],
        }
    }
}

/// Numbers an expression can be evaluated on: plain `f64` or [`Jet`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + Send
    + Sync
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn powi(self, n: i32) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

impl Scalar for Jet {
    fn from_f64(v: f64) -> Self {
        Jet::cst(v)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.scale(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.scale(self.v.cos(), -self.v.sin())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.scale(e, e)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Jet::cst(1.0);
        }
        self.scale(self.v.powi(n), n as f64 * self.v.powi(n - 1))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1], self.g[2] + o.g[2]],
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            g: [self.g[0] - o.g[0], self.g[1] - o.g[1], self.g[2] - o.g[2]],
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            g: [
                self.g[0] * o.v + self.v * o.g[0],
                self.g[1] * o.v + self.v * o.g[1],
                self.g[2] * o.v + self.v * o.g[2],
            ],
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let q = self.v / o.v;
        Jet {
            v: q,
            g: [
                (self.g[0] - q * o.g[0]) / o.v,
                (self.g[1] - q * o.g[1]) / o.v,
                (self.g[2] - q * o.g[2]) / o.v,
            ],
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            v: -self.v,
            g: [-self.g[0], -self.g[1], -self.g[2]],
        }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, o: f64) -> Jet {
        Jet {
            v: self.v + o,
            g: self.g,
        }
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, o: f64) -> Jet {
        Jet {
            v: self.v - o,
            g: self.g,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, o: f64) -> Jet {
        Jet {
            v: self.v * o,
            g: [self.g[0] * o, self.g[1] * o, self.g[2] * o],
        }
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, o: f64) -> Jet {
        Jet {
            v: self.v / o,
            g: [self.g[0] / o, self.g[1] / o, self.g[2] / o],
        }
    }
}

pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn matmul(a: &M3, b: &M3) -> M3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

/// Row vector times matrix.
pub fn rowmul(r: &[f64; 3], b: &M3) -> [f64; 3] {
    [
        r[0] * b[0][0] + r[1] * b[1][0] + r[2] * b[2][0],
        r[0] * b[0][1] + r[1] * b[1][1] + r[2] * b[2][1],
        r[0] * b[0][2] + r[1] * b[1][2] + r[2] * b[2][2],
    ]
}

pub fn matvec(a: &M3, v: &P3) -> P3 {
    [dot(&a[0], v), dot(&a[1], v), dot(&a[2], v)]
}

pub fn det3(a: &M3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Solves `a x = b` by Cramer's rule; `None` when `a` is numerically singular.
pub fn solve3(a: &M3, b: &P3) -> Option<P3> {
    let d = det3(a);
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if d == 0.0 || !d.is_finite() || d.abs() < 1e-300 * scale.max(1.0) {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = *a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *o = det3(&m) / d;
    }
    Some(out)
}

pub fn sub3(a: &P3, b: &P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add3(a: &P3, b: &P3) -> P3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale3(s: f64, a: &P3) -> P3 {
    [s * a[0], s * a[1], s * a[2]]
}

pub fn norm3(a: &P3) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist3(a: &P3, b: &P3) -> f64 {
    norm3(&sub3(a, b))
}

pub const IDENTITY: M3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[cfg(test)]
mod tests {
    use super::*;

    fn poly<T: Scalar>(w: [T; 3]) -> T {
        w[0] * w[1] + (w[2] * 3.0).sin() - w[0].powi(3) / (w[1] + 2.0) + w[2].exp()
    }

    #[test]
    fn jet_gradient_matches_finite_differences() {
        let w = [0.3, -0.7, 0.2];
        let j = poly(Jet::point(w));
        assert!((j.v - poly(w)).abs() < 1e-15);
        for i in 0..3 {
            let h = 1e-6;
            let mut a = w;
            let mut b = w;
            a[i] += h;
            b[i] -= h;
            let fd = (poly(a) - poly(b)) / (2.0 * h);
            assert!(
                (fd - j.g[i]).abs() < 1e-8,
                "component {i}: {fd} vs {}",
                j.g[i]
            );
        }
    }

    #[test]
    fn cramer_solves_and_inverts() {
        let a = [[2.0, 1.0, 0.0], [0.5, 3.0, 1.0], [0.0, -1.0, 4.0]];
        let x = [1.0, -2.0, 0.5];
        let b = matvec(&a, &x);
        let s = solve3(&a, &b).unwrap();
        for i in 0..3 {
            assert!((s[i] - x[i]).abs() < 1e-14);
        }
        assert!(solve3(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]], &b).is_none());
    }

    #[test]
    fn det_of_product_is_product_of_dets() {
        let a = [[1.0, 2.0, 0.5], [0.0, 1.5, -1.0], [0.3, 0.0, 2.0]];
        let b = [[0.2, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 0.4, 0.7]];
        let lhs = det3(&matmul(&a, &b));
        assert!((lhs - det3(&a) * det3(&b)).abs() < 1e-14);
        assert_eq!(rowmul(&a[0], &b), matmul(&a, &b)[0]);
    }
}
