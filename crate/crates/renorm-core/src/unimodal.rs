//! Even unimodal maps of `I = [-1, 1]` and their period-doubling renormalization.
//!
//! A map is stored as coefficients `c_0..c_d` of `x ↦ Σ c_j x^{2j}` with
//! `c_0 = 1`, so the critical point sits at `0` and the critical value is `1`.
//! The renormalization is `Rf(x) = f(f(σ₀ x)) / σ₀` with `σ₀ = f(1) = f²(0)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Scalar;

pub const DOMAIN_TOL: f64 = 1e-9;
/// Largest `|x|` at which internal (unchecked) inverse branches still search.
pub(crate) const EXTENDED_XMAX: f64 = 1.2;
/// Default number of even coefficients used when refitting a composition.
pub const REFIT_DEGREE: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `x >= 0`.
    Plus,
    /// `x <= 0`.
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnimodalMap {
    coeffs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub fstar: UnimodalMap,
    /// Signed scaling ratio `σ = f★(1)`, in `(-1, 0)`.
    pub sigma: f64,
    /// Sup-norm of `Rf★ - f★` on a 256-point grid.
    pub residual: f64,
    pub iterations: usize,
}

impl UnimodalMap {
    /// Validated constructor: `c_0 = 1`, `f(I) ⊆ I` and a single critical point.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let f = Self::new_unchecked(coeffs)?;
        f.validate()?;
        Ok(f)
    }

    /// Only checks the normalization `c_0 = 1`.
    pub fn new_unchecked(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || (coeffs[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMap(format!(
                "normalization requires c0 = 1, got {:?}",
                coeffs.first()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMap("non-finite coefficient".into()));
        }
        Ok(UnimodalMap { coeffs })
    }

    /// `x ↦ 1 - a x²`.
    pub fn quadratic(a: f64) -> Self {
        UnimodalMap {
            coeffs: vec![1.0, -a],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = 1024;
        let mut sign_changes = 0;
        let mut last = 0.0f64;
        for i in 0..n {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let v = self.value(x);
            if v.abs() > 1.0 + 1e-12 {
                return Err(Error::InvalidMap(format!("f({x}) = {v} leaves I")));
            }
            let d = self.deriv(x);
            if d != 0.0 {
                if last != 0.0 && d.signum() != last.signum() {
                    sign_changes += 1;
                }
                last = d;
            }
        }
        if sign_changes != 1 {
            return Err(Error::InvalidMap(format!(
                "{sign_changes} critical points in the interior of I"
            )));
        }
        Ok(())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Number of even coefficients beyond the constant term.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Checked evaluation on `I`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x.abs() <= 1.0 + DOMAIN_TOL) {
            return Err(Error::domain("unimodal eval outside I", &[x]));
        }
        Ok(self.value(x))
    }

    /// Unchecked evaluation (polynomial continuation outside `I`).
    pub fn value<T: Scalar>(&self, x: T) -> T {
        let t = x * x;
        let mut acc = T::from_f64(self.coeffs[self.degree()]);
        for c in self.coeffs[..self.degree()].iter().rev() {
            acc = acc * t + *c;
        }
        acc
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.value_deriv(x).1
    }

    pub fn value_deriv(&self, x: f64) -> (f64, f64) {
        let t = x * x;
        let (p, dp) = self.in_t(t);
        (p, 2.0 * x * dp)
    }

    /// The map and its derivative as polynomials in `t = x²`.
    fn in_t(&self, t: f64) -> (f64, f64) {
        let d = self.degree();
        let mut p = self.coeffs[d];
        let mut dp = 0.0;
        for c in self.coeffs[..d].iter().rev() {
            dp = dp * t + p;
            p = p * t + *c;
        }
        (p, dp)
    }

    /// Solves `f(x) = y` on the requested monotone branch of `I`.
    pub fn inverse_branch(&self, y: f64, branch: Branch) -> Result<f64> {
        self.inverse_within(y, branch, 1.0)
    }

    /// Inverse branch searched on `|x| <= xmax`.
    pub(crate) fn inverse_within(&self, y: f64, branch: Branch, xmax: f64) -> Result<f64> {
        let tmax = xmax * xmax;
        let (hi_val, _) = self.in_t(tmax);
        let lo_val = self.coeffs[0];
        let slack = 1e-12;
        if !(y <= lo_val + slack && y >= hi_val - slack) {
            return Err(Error::NoSolution(format!(
                "y = {y} outside branch range [{hi_val}, {lo_val}]"
            )));
        }
        let t = self.solve_t(y, tmax, hi_val)?;
        let x = t.sqrt();
        Ok(match branch {
            Branch::Plus => x,
            Branch::Minus => -x,
        })
    }

    /// Safeguarded Newton for `Σ c_j t^j = y` on `[0, tmax]`; the map is
    /// decreasing in `t` there.
    fn solve_t(&self, y: f64, tmax: f64, hi_val: f64) -> Result<f64> {
        let span = self.coeffs[0] - hi_val;
        let mut lo = 0.0;
        let mut hi = tmax;
        let mut t = if span > 0.0 {
            ((self.coeffs[0] - y) / span * tmax).clamp(0.0, tmax)
        } else {
            0.5 * tmax
        };
        for _ in 0..100 {
            let (p, dp) = self.in_t(t);
            let g = p - y;
            if g == 0.0 {
                return Ok(t);
            }
            if g > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let mut next = if dp != 0.0 { t - g / dp } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - t).abs();
            t = next;
            if step <= 4.0 * f64::EPSILON * t.max(1e-300) || hi - lo <= f64::EPSILON * hi {
                return Ok(t);
            }
        }
        let (p, _) = self.in_t(t);
        if (p - y).abs() <= 1e-13 {
            Ok(t)
        } else {
            Err(Error::NotConverged {
                what: "inverse branch",
                iters: 100,
                residual: (p - y).abs(),
            })
        }
    }

    /// The period-doubling interval `J_f = [-|f²(0)|, |f²(0)|]` when `f` is
    /// renormalizable.
    pub fn renormalizable(&self) -> Option<(f64, f64)> {
        let s = self.value(1.0);
        if !(s < 0.0 && s > -1.0) {
            return None;
        }
        let a = s.abs();
        // f(J) must lie to the right of J and f² must map J into itself.
        let fj = self.value(a);
        if !(fj > a) {
            return None;
        }
        let back = self.value(fj);
        if back.abs() > a + 1e-9 {
            return None;
        }
        let endpoint = self.value(self.value(0.0));
        if ((endpoint.abs()) - a).abs() > 1e-9 {
            return None;
        }
        Some((-a, a))
    }

    /// `Rf` refitted to `max(degree, REFIT_DEGREE)` even coefficients.
    pub fn renormalize1d(&self) -> Result<(UnimodalMap, f64)> {
        self.renormalize1d_to(self.degree().max(REFIT_DEGREE))
    }

    pub fn renormalize1d_to(&self, degree: usize) -> Result<(UnimodalMap, f64)> {
        if self.renormalizable().is_none() {
            return Err(Error::NotRenormalizable(
                "no period-doubling interval around the critical point".into(),
            ));
        }
        let s = self.value(1.0);
        let rf = |x: f64| self.value(self.value(s * x)) / s;
        let (coeffs, _) = even_fit(&rf, degree, Some(1.0))?;
        let out = UnimodalMap { coeffs };
        let residual = grid_sup(|x| out.value(x) - rf(x), 256);
        if residual > 1e-8 {
            return Err(Error::InsufficientDegree { degree, residual });
        }
        Ok((out, s))
    }

    /// Sup-distance to another map on an `n`-point grid of `I`.
    pub fn sup_distance(&self, other: &UnimodalMap, n: usize) -> f64 {
        grid_sup(|x| self.value(x) - other.value(x), n)
    }

    /// Coefficients padded with zeros to `len`.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        let mut c = self.coeffs.clone();
        c.resize(len.max(c.len()), 0.0);
        c
    }
}

/// Sup of `|g|` over an `n`-point uniform grid of `I`.
pub fn grid_sup(g: impl Fn(f64) -> f64, n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            g(x).abs()
        })
        .fold(0.0, f64::max)
}

/// Chebyshev points of the first kind on `[-1, 1]`.
pub fn chebyshev_nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos())
        .collect()
}

/// Least-squares fit of an even polynomial with `degree + 1` coefficients to
/// `g` on `4 * degree` Chebyshev nodes. With `pin = Some(c0)` the constant
/// term is fixed. Returns the coefficients and the sup residual at the nodes.
pub fn even_fit(
    g: &dyn Fn(f64) -> f64,
    degree: usize,
    pin: Option<f64>,
) -> Result<(Vec<f64>, f64)> {
    let nodes = chebyshev_nodes(4 * degree.max(1));
    let values: Vec<f64> = nodes.iter().map(|&x| g(x)).collect();
    even_fit_samples(&nodes, &values, degree, pin)
}

/// Least-squares coefficients `b_j` of `x ↦ Σ_{j<terms} b_j x^{2j+1}` fitted
/// to `g` at Chebyshev nodes.
pub fn odd_fit(g: &dyn Fn(f64) -> f64, terms: usize) -> Result<Vec<f64>> {
    let nodes = chebyshev_nodes(4 * terms.max(1));
    let values: Vec<f64> = nodes.iter().map(|&x| g(x)).collect();
    odd_fit_samples(&nodes, &values, terms)
}

/// [`odd_fit`] on given samples.
pub fn odd_fit_samples(nodes: &[f64], values: &[f64], terms: usize) -> Result<Vec<f64>> {
    let mut a = DMatrix::<f64>::zeros(nodes.len(), terms);
    let mut b = DVector::<f64>::zeros(nodes.len());
    for (i, (&x, &v)) in nodes.iter().zip(values).enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidMap(format!("non-finite sample at x = {x}")));
        }
        for j in 0..terms {
            a[(i, j)] = x.powi(2 * j as i32 + 1);
        }
        b[i] = v;
    }
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-15)
        .map_err(|e| Error::InvalidMap(format!("least squares failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

pub fn even_fit_samples(
    nodes: &[f64],
    values: &[f64],
    degree: usize,
    pin: Option<f64>,
) -> Result<(Vec<f64>, f64)> {
    let first = usize::from(pin.is_some());
    let cols = degree + 1 - first;
    let rows = nodes.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    for (i, (&x, &v)) in nodes.iter().zip(values).enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidMap(format!("non-finite sample at x = {x}")));
        }
        let t = x * x;
        for j in 0..cols {
            a[(i, j)] = t.powi((j + first) as i32);
        }
        b[i] = v - pin.unwrap_or(0.0);
    }
    let svd = a.clone().svd(true, true);
    let sol = svd
        .solve(&b, 1e-15)
        .map_err(|e| Error::InvalidMap(format!("least squares failed: {e}")))?;
    let mut coeffs = Vec::with_capacity(degree + 1);
    if let Some(c0) = pin {
        coeffs.push(c0);
    }
    coeffs.extend(sol.iter().copied());
    let resid = (&a * &sol - &b).amax();
    Ok((coeffs, resid))
}

/// Newton solve of `f(x) = f(f(σ₀x))/σ₀`, `σ₀ = f(1)`, collocated at the
/// positive Chebyshev nodes, from the guess `1 - 1.52x² + 0.1x⁴`.
pub fn solve_fixed_point(degree: usize, tol: f64) -> Result<FixedPointResult> {
    let mut guess = vec![1.0, -1.52, 0.1];
    guess.resize(degree + 1, 0.0);
    solve_fixed_point_from(&guess, degree, tol, 50)
}

pub fn solve_fixed_point_from(
    initial: &[f64],
    degree: usize,
    tol: f64,
    max_iters: usize,
) -> Result<FixedPointResult> {
    if degree < 10 {
        return Err(Error::InsufficientDegree {
            degree,
            residual: f64::NAN,
        });
    }
    let mut c = initial.to_vec();
    c.resize(degree + 1, 0.0);
    c[0] = 1.0;
    let nodes: Vec<f64> = (1..=degree)
        .map(|i| ((2 * i - 1) as f64 * std::f64::consts::PI / (4 * degree) as f64).cos())
        .collect();
    let mut res = collocation_residual(&c, &nodes);
    let mut norm = res.amax();
    let mut iterations = 0;
    while iterations < max_iters {
        if norm <= 1e-3 * tol.min(1e-12) {
            break;
        }
        iterations += 1;
        let jac = collocation_jacobian(&c, &nodes);
        let step = jac.lu().solve(&(-&res)).ok_or(Error::NotConverged {
            what: "fixed-point Newton (singular Jacobian)",
            iters: iterations,
            residual: norm,
        })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = c.clone();
            for j in 1..=degree {
                trial[j] += lambda * step[j - 1];
            }
            let r = collocation_residual(&trial, &nodes);
            let n = r.amax();
            if n.is_finite() && n < norm {
                c = trial;
                res = r;
                norm = n;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let f = UnimodalMap { coeffs: c };
    let s = f.value(1.0);
    let residual = grid_sup(|x| f.value(f.value(s * x)) / s - f.value(x), 256);
    if !(residual <= tol) {
        if norm <= 1e-3 * tol.min(1e-12) {
            return Err(Error::InsufficientDegree { degree, residual });
        }
        return Err(Error::NotConverged {
            what: "fixed-point Newton",
            iters: iterations,
            residual,
        });
    }
    Ok(FixedPointResult {
        fstar: f,
        sigma: s,
        residual,
        iterations,
    })
}

fn collocation_residual(c: &[f64], nodes: &[f64]) -> DVector<f64> {
    let f = UnimodalMap { coeffs: c.to_vec() };
    let s = f.value(1.0);
    DVector::from_iterator(
        nodes.len(),
        nodes
            .iter()
            .map(|&x| f.value(x) - f.value(f.value(s * x)) / s),
    )
}

/// Exact Jacobian of the collocation residual with respect to `c_1..c_d`.
fn collocation_jacobian(c: &[f64], nodes: &[f64]) -> DMatrix<f64> {
    let f = UnimodalMap { coeffs: c.to_vec() };
    let d = c.len() - 1;
    let s = f.value(1.0);
    let mut jac = DMatrix::zeros(nodes.len(), d);
    for (i, &x) in nodes.iter().enumerate() {
        let u = s * x;
        let (v, fu) = f.value_deriv(u);
        let (w, fv) = f.value_deriv(v);
        for j in 1..=d {
            let e = 2 * j as i32;
            // σ = f(1) depends on every coefficient with ∂σ/∂c_j = 1.
            let dv = u.powi(e) + fu * x;
            let dw = v.powi(e) + fv * dv;
            let dg = dw / s - w / (s * s);
            jac[(i, j - 1)] = x.powi(e) - dg;
        }
    }
    jac
}

/// `(G, dG/da)` for `G(a) = f_a^p(0)` with `f_a(x) = 1 − a x²`.
fn logistic_orbit(a: f64, p: usize) -> (f64, f64) {
    let (mut x, mut dx) = (0.0f64, 0.0f64);
    for _ in 0..p {
        let nx = 1.0 - a * x * x;
        dx = -x * x - 2.0 * a * x * dx;
        x = nx;
    }
    (x, dx)
}

/// Scaling estimates from the superstable cascade of `x ↦ 1 − a x²`,
/// without reference to any fixed-point solve.
///
/// Newton locates `a_n` with `f_a^{2ⁿ}(0) = 0` for `n = 1..=nmax`, each
/// started from a geometric extrapolation of the previous two. The returned
/// ratios `d_{n+1}/d_n` of the signed distances `d_n = f_{a_n}^{2^{n−1}}(0)`
/// converge to `σ`.
pub fn superstable_scaling_estimates(nmax: usize) -> Result<Vec<f64>> {
    let mut params: Vec<f64> = vec![1.0];
    for n in 2..=nmax {
        let p = 1usize << n;
        let k = params.len();
        let mut a = if k >= 2 {
            params[k - 1] + (params[k - 1] - params[k - 2]) / 4.669_201_609
        } else {
            1.31
        };
        let mut converged = false;
        for _ in 0..60 {
            let (g, dg) = logistic_orbit(a, p);
            let step = g / dg;
            if !step.is_finite() {
                break;
            }
            a -= step;
            if step.abs() < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NotConverged {
                what: "superstable parameter",
                iters: 60,
                residual: logistic_orbit(a, p).0.abs(),
            });
        }
        params.push(a);
    }
    let d: Vec<f64> = params
        .iter()
        .enumerate()
        .map(|(i, a)| logistic_orbit(*a, 1usize << i).0)
        .collect();
    Ok(d.windows(2).map(|w| w[1] / w[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let f = UnimodalMap::quadratic(2.0);
        assert_eq!(f.eval(0.0).unwrap(), 1.0);
        assert_eq!(f.eval(1.0).unwrap(), -1.0);
        let g = UnimodalMap::quadratic(1.401155);
        assert!((g.eval(0.5).unwrap() - 0.64971125).abs() < 1e-15);
        assert!(matches!(f.eval(1.0 + 1e-6), Err(Error::Domain { .. })));
        assert!(f.eval(1.0 + 1e-10).is_ok());
    }

    #[test]
    fn inverse_branch_examples() {
        let f = UnimodalMap::quadratic(2.0);
        assert_eq!(f.inverse_branch(1.0, Branch::Plus).unwrap(), 0.0);
        assert!((f.inverse_branch(-1.0, Branch::Plus).unwrap() - 1.0).abs() < 1e-15);
        let x = f.inverse_branch(0.5, Branch::Plus).unwrap();
        assert!((x - 0.5).abs() < 1e-15);
        let xm = f.inverse_branch(0.5, Branch::Minus).unwrap();
        assert!((xm + 0.5).abs() < 1e-15);
        assert!(matches!(
            f.inverse_branch(1.5, Branch::Plus),
            Err(Error::NoSolution(_))
        ));
        assert!(matches!(
            f.inverse_branch(-1.2, Branch::Plus),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn renormalizable_examples() {
        assert!(UnimodalMap::quadratic(1.401155).renormalizable().is_some());
        assert!(UnimodalMap::quadratic(0.5).renormalizable().is_none());
    }

    #[test]
    fn validation_rejects_bad_maps() {
        assert!(UnimodalMap::new(vec![0.9, -1.0]).is_err());
        assert!(UnimodalMap::new(vec![1.0, -2.5]).is_err());
        assert!(UnimodalMap::new(vec![1.0, 1.0, -3.0]).is_err());
        assert!(UnimodalMap::new(vec![1.0, -1.4]).is_ok());
    }

    #[test]
    fn even_fit_reproduces_even_polynomials() {
        let g = |x: f64| 1.0 - 0.3 * x * x + 0.05 * x.powi(6);
        let (c, r) = even_fit(&g, 5, Some(1.0)).unwrap();
        assert!(r < 1e-14);
        assert!((c[1] + 0.3).abs() < 1e-12 && (c[3] - 0.05).abs() < 1e-12);
    }
}
