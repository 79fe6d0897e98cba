//! Universal numbers `b₂`, `b₁ = b_F / b₂`, the universal function `a(x)`,
//! the `q`-functions, and identity checks for the recursions satisfied by the
//! derivatives of `δ_k` and by the Jacobians along the cascade.
//!
//! Every `^{2ⁿ}` quantity is handled through `L(x) = log|x|` divided by `2ⁿ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::{average_jacobian, cantor_points, Letter, TipData};
use crate::error::{Error, Result};
use crate::jet::{det3, P3};
use crate::renorm::{RenormCascade, Straightening};
use crate::unimodal::Branch;

/// Summary of the universal numbers of one cascade.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UniversalNumbers {
    pub b2: f64,
    pub b1: f64,
    pub b_f: f64,
    /// Fitted rate of the `b₂` estimates, absent when they do not move.
    pub rho_fit: Option<f64>,
    /// `(x, a(x))` at the deepest level used.
    pub a_samples: Vec<(f64, f64)>,
}

/// `|a − b|` relative to a scale, with `0/0 = 0`.
pub fn rel_to(a: f64, b: f64, scale: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else if scale > 0.0 {
        d / scale
    } else {
        f64::INFINITY
    }
}

/// Least-squares line `y ≈ slope·x + intercept`; `None` for fewer than two
/// distinct abscissae or non-finite data.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Geometric rate of a sequence of positive sizes, from a log-linear fit.
pub fn rate_fit(values: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(i, v)| (i as f64, v.ln()))
        .unzip();
    line_fit(&xs, &ys).map(|(s, _)| s.exp())
}

fn straightening(c: &RenormCascade, k: usize) -> Result<Straightening> {
    if k < c.depth() {
        Ok(c.body(k + 1)?.straightening().clone())
    } else {
        Ok(Straightening::new(c.level(k)?, c.solve()))
    }
}

/// `q_k(y) = d/dy δ_k(y, f_k⁻¹(y), 0)`.
pub fn q_function(c: &RenormCascade, k: usize, y: f64) -> Result<f64> {
    Ok(straightening(c, k)?.pq(y)?.1)
}

/// Product check for one level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct B2Row {
    pub n: usize,
    /// `exp` of the Cantor average of `log|∂_zδ|`.
    pub average: f64,
    /// `|∂_zδ_n(τ_n)|^{1/2ⁿ}`.
    pub tip: f64,
    /// `|log|∂_zδ_n(τ_n)| − Σ_w log|∂_zδ ∘ Ψⁿ_w(τ_n)||`, the relative error of
    /// the product formula.
    pub product_rel: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct B2Estimate {
    pub b2: f64,
    pub rows: Vec<B2Row>,
    pub rho_fit: Option<f64>,
}

/// `b₂` by the Cantor average of `log|∂_zδ|` and by `|∂_zδ_n(τ_n)|^{1/2ⁿ}`.
pub fn estimate_b2(c: &RenormCascade, tips: &TipData, nmax: usize) -> Result<B2Estimate> {
    let f0 = c.level(0)?.clone();
    let mut rows = Vec::new();
    for n in 1..=nmax.min(c.depth()) {
        let base = tips.tip(n)?;
        let pts = cantor_points(c, 0, n, base)?;
        let vals = pts
            .par_iter()
            .map(|p| Ok(f0.jet(*p)?.1[2][2]))
            .collect::<Result<Vec<f64>>>()?;
        let pos = vals.iter().filter(|v| **v > 0.0).count();
        if pos != 0 && pos != vals.len() {
            return Err(Error::Hypothesis(format!(
                "∂_zδ changes sign across the pieces of level {n}"
            )));
        }
        let logsum = vals
            .iter()
            .map(|v| {
                if *v == 0.0 {
                    Err(Error::Degenerate(format!(
                        "∂_zδ vanishes on a piece of level {n}"
                    )))
                } else {
                    Ok(v.abs().ln())
                }
            })
            .sum::<Result<f64>>()?;
        let scale = (1u64 << n) as f64;
        let dz_n = c.level(n)?.jet(base)?.1[2][2];
        let l_tip = dz_n.abs().ln();
        rows.push(B2Row {
            n,
            average: (logsum / scale).exp(),
            tip: (l_tip / scale).exp(),
            product_rel: (l_tip - logsum).abs(),
        });
    }
    let last = rows.last().ok_or_else(|| Error::Index {
        what: "b2 depth",
        index: nmax,
        limit: c.depth(),
    })?;
    let diffs: Vec<f64> = rows
        .windows(2)
        .map(|w| (w[1].average.ln() - w[0].average.ln()).abs())
        .collect();
    Ok(B2Estimate {
        b2: last.average,
        rho_fit: rate_fit(&diffs),
        rows,
    })
}

/// `E_k(w) = ∂_yε_k − ∂_zε_k·∂_yδ_k/∂_zδ_k = Jac F_k / ∂_zδ_k`.
pub fn b1_expression(c: &RenormCascade, k: usize, w: P3) -> Result<f64> {
    let (_, m) = c.level(k)?.jet(w)?;
    let ey = -m[0][1];
    let ez = -m[0][2];
    if m[2][2] == 0.0 {
        return Err(Error::Degenerate(format!("∂_zδ_{k} vanishes")));
    }
    Ok(ey - ez * m[2][1] / m[2][2])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct B1Row {
    pub k: usize,
    /// `(1/2ᵏ) log|E_k(τ_k)| − log b₁`.
    pub tip_residual: f64,
    /// Range of `(1/2ᵏ) log|E_k|` over the random Cantor points.
    pub spread: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct B1Estimate {
    pub b1: f64,
    pub b_f: f64,
    pub b2: f64,
    /// `b_F` estimates for `n = 1..nmax`.
    pub b_f_by_n: Vec<f64>,
    pub rows: Vec<B1Row>,
    /// Seed of the random Cantor points.
    pub seed: u64,
}

/// `b₁ = b_F / b₂`, together with `E_k` at tips and at ten random points of
/// the level-`k` Cantor sample.
pub fn estimate_b1(
    c: &RenormCascade,
    tips: &TipData,
    b2: f64,
    nmax: usize,
    seed: u64,
) -> Result<B1Estimate> {
    if !(b2 > 0.0 && b2.is_finite()) {
        return Err(Error::Hypothesis(format!(
            "b2 = {b2} is not a positive number"
        )));
    }
    let nmax = nmax.min(c.depth());
    let b_f_by_n = (1..=nmax)
        .map(|n| average_jacobian(c, tips, n))
        .collect::<Result<Vec<_>>>()?;
    let b_f = *b_f_by_n.last().ok_or_else(|| Error::Index {
        what: "b1 depth",
        index: nmax,
        limit: c.depth(),
    })?;
    let b1 = b_f / b2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for k in 1..=nmax {
        let scale = (1u64 << k) as f64;
        let e_tip = b1_expression(c, k, tips.tip(k)?)?;
        let pts = cantor_points(c, k, c.depth(), tips.tip(c.depth())?)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..10 {
            let p = pts[rng.gen_range(0..pts.len())];
            let l = b1_expression(c, k, p)?.abs().ln() / scale;
            lo = lo.min(l);
            hi = hi.max(l);
        }
        rows.push(B1Row {
            k,
            tip_residual: e_tip.abs().ln() / scale - b1.ln(),
            spread: hi - lo,
        });
    }
    Ok(B1Estimate {
        b1,
        b_f,
        b2,
        b_f_by_n,
        rows,
        seed,
    })
}

/// `a(x) ≈ exp(log|Jac F_n(x, y₀, z₀)| − 2ⁿ log b_F)` on the slice through
/// the tip `τ_n = (·, y₀, z₀)`.
pub fn universal_a(c: &RenormCascade, tips: &TipData, b_f: f64, x: f64, n: usize) -> Result<f64> {
    if !(b_f > 0.0 && b_f.is_finite()) {
        return Err(Error::Hypothesis(format!("b_F = {b_f} is undefined")));
    }
    let t = tips.tip(n)?;
    let (_, m) = c.level(n)?.jet([x, t[1], t[2]])?;
    let j = det3(&m);
    if j == 0.0 {
        return Err(Error::Degenerate(format!("Jac F_{n} vanishes at x = {x}")));
    }
    Ok((j.abs().ln() - (1u64 << n) as f64 * b_f.ln()).exp())
}

/// Worst residuals of the three `Dδ_k` identities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DdeltaReport {
    pub k: usize,
    pub points: usize,
    /// Relative residuals of `∂_xδ_k`, `∂_yδ_k`, `∂_zδ_k`.
    pub rel: [f64; 3],
    /// Relative residual of `∂_zδ_k = ∂_zδ∘ψ_c · ∂_zδ∘ψ_v`.
    pub dz_product_rel: f64,
    /// `max |∂_yδ∘ψ_c + ∂_zδ∘ψ_c·∂_xδ∘ψ_v|`.
    pub bracket_abs: f64,
    /// The bracket relative to the size of its two terms.
    pub bracket_rel: f64,
}

impl DdeltaReport {
    pub fn max_rel(&self) -> f64 {
        self.rel.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares the jets of `δ_k` with the expressions built from the level
/// `k − 1` map through `ψ^k_v`, `ψ^k_c`, the partials of `φ⁻¹` and `q_{k−1}`.
///
/// With `u = σw`, `ψ_v = H⁻¹(u)`, `ψ_c = F(ψ_v)` and the bracket
/// `B = ∂_yδ∘ψ_c + ∂_zδ∘ψ_c·∂_xδ∘ψ_v`:
///
/// `∂_xδ_k = B·∂_xφ⁻¹(u) + ∂_xδ∘ψ_c − q(u_x)`,
/// `∂_yδ_k = B·∂_yφ⁻¹(u) + ∂_zδ∘ψ_c·[∂_yδ∘ψ_v + ∂_zδ∘ψ_v·q(u_y)]`,
/// `∂_zδ_k = B·∂_zφ⁻¹(u) + ∂_zδ∘ψ_c·∂_zδ∘ψ_v`.
///
/// The partials of `φ⁻¹` come from `ε = f − π_x F` at `ψ_v`:
/// with `g = (f⁻¹)'(u_x + ε∘ψ_v)`, `∂_xφ⁻¹ = g/(1 − g∂_xε)`,
/// `∂_yφ⁻¹ = g(∂_yε + ∂_zε·q(u_y))/(1 − g∂_xε)`, `∂_zφ⁻¹ = g∂_zε/(1 − g∂_xε)`.
pub fn check_ddelta_recursion(
    c: &RenormCascade,
    k: usize,
    points: usize,
    seed: u64,
) -> Result<DdeltaReport> {
    if k == 0 {
        return Err(Error::Index {
            what: "Dδ level (needs k ≥ 1)",
            index: k,
            limit: c.depth(),
        });
    }
    let body = c.body(k)?;
    let st = body.straightening();
    let parent = c.level(k - 1)?;
    let fk = c.level(k)?;
    let s = body.sigma();
    let pts = fk.bx().random_points(points, seed);
    let rows = pts
        .par_iter()
        .map(|w| -> Result<[f64; 6]> {
            let pj = body.psi_jet(*w)?;
            let dv = pj.df_v[2];
            let dc = parent.jet(pj.c)?.1[2];
            let (_, qx) = st.pq(s * w[0])?;
            let (_, qy) = st.pq(s * w[1])?;
            let f = parent.f();
            let fp = f.deriv(pj.v[0]);
            let ex = fp - pj.df_v[0][0];
            let ey = -pj.df_v[0][1];
            let ez = -pj.df_v[0][2];
            let g = 1.0 / fp;
            let den = 1.0 - g * ex;
            let phi = [g / den, g * (ey + ez * qy) / den, g * ez / den];
            let b = dc[1] + dc[2] * dv[0];
            let lhs = fk.jet(*w)?.1[2];
            let tx = [b * phi[0], dc[0], -qx];
            let ty = [b * phi[1], dc[2] * dv[1], dc[2] * dv[2] * qy];
            let tz = [b * phi[2], dc[2] * dv[2]];
            let sum = |t: &[f64]| t.iter().sum::<f64>();
            let mag = |t: &[f64]| t.iter().map(|v| v.abs()).sum::<f64>();
            Ok([
                rel_to(lhs[0], sum(&tx), mag(&tx)),
                rel_to(lhs[1], sum(&ty), mag(&ty)),
                rel_to(lhs[2], sum(&tz), mag(&tz)),
                rel_to(lhs[2], tz[1], tz[1].abs()),
                b.abs(),
                rel_to(dc[1], -dc[2] * dv[0], dc[1].abs() + (dc[2] * dv[0]).abs()),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst = [0.0f64; 6];
    for r in &rows {
        for i in 0..6 {
            worst[i] = worst[i].max(r[i]);
        }
    }
    Ok(DdeltaReport {
        k,
        points,
        rel: [worst[0], worst[1], worst[2]],
        dz_product_rel: worst[3],
        bracket_abs: worst[4],
        bracket_rel: worst[5],
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JacReport {
    pub n: usize,
    pub points: usize,
    /// Relative residual of the exact product.
    pub max_rel: f64,
    /// Relative deviation of the one-dimensional factor form, which replaces
    /// `∂_xπ_xF` by `f'` of the level-`(n−1)` unimodal part.
    pub one_dim_factor_rel: f64,
}

/// `Jac F_n(w) = [∂_xπ_xF(F²v) / ∂_xπ_xF(v)] · Jac F(v) · Jac F(F v)` with
/// `v = H⁻¹(σw)` and `F = F_{n−1}`.
///
/// The two factors are the Jacobians of `H` at `F²v` and of `H⁻¹` at `σw`;
/// for a unimodal `π_x F` they reduce to `(f⁻¹)'(σx) · f'(f(σx))`.
pub fn check_jac_recursion(
    c: &RenormCascade,
    n: usize,
    points: usize,
    seed: u64,
) -> Result<JacReport> {
    let body = c.body(n)?;
    let parent = c.level(n - 1)?;
    let fnn = c.level(n)?;
    let s = body.sigma();
    let f = parent.f();
    let pts = fnn.bx().random_points(points, seed);
    let rows = pts
        .par_iter()
        .map(|w| -> Result<(f64, f64)> {
            let lhs = det3(&fnn.jet(*w)?.1);
            let pj = body.psi_jet(*w)?;
            let j1 = pj.df_v;
            let (v3, j2) = parent.jet(pj.c)?;
            let (_, j3) = parent.jet(v3)?;
            let core = det3(&j1) * det3(&j2);
            let rhs = j3[0][0] / j1[0][0] * core;
            let x = s * w[0];
            let r = f.inverse_branch(x, Branch::Plus)?;
            let one_dim = f.deriv(f.value(x)) / f.deriv(r) * core;
            let scale = lhs.abs().max(rhs.abs());
            Ok((
                rel_to(lhs, rhs, scale),
                rel_to(lhs, one_dim, scale.max(one_dim.abs())),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JacReport {
        n,
        points,
        max_rel: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        one_dim_factor_rel: rows.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

/// `Ψ^n_{i,ℓ}(w)` for `i = n, n−1, …, k`, returned as a vector indexed by
/// `i − k`.
fn uniform_chain(c: &RenormCascade, k: usize, n: usize, l: Letter, w: P3) -> Result<Vec<P3>> {
    let mut out = vec![[0.0; 3]; n - k + 1];
    out[n - k] = w;
    for i in (k..n).rev() {
        out[i - k] = c.psi(i + 1, l, out[i + 1 - k])?;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DxSumReport {
    pub k: usize,
    pub n: usize,
    pub max_rel: f64,
    /// `∂_xδ_k(c_k)`.
    pub limit_lhs: f64,
    /// Partial sums `Σ_{i=k}^{m−1} q_i(π_x c_i)` for `m = k+1..depth`.
    pub partial_sums: Vec<f64>,
    /// `|∂_xδ_k(c_k) − S_m|`, equal to `|∂_xδ_m(c_m)|` by the finite identity.
    pub tails: Vec<f64>,
    pub tail_rate: Option<f64>,
}

/// `∂_xδ_n(w) = ∂_xδ_k∘Ψ^n_{k,c}(w) − Σ_{i=k}^{n−1} q_i(π_x Ψ^n_{i,c}(w))`,
/// and its limit at the critical points.
pub fn check_dx_delta_sum(
    c: &RenormCascade,
    tips: &TipData,
    k: usize,
    n: usize,
    points: usize,
    seed: u64,
) -> Result<DxSumReport> {
    if !(k < n && n <= c.depth()) {
        return Err(Error::Index {
            what: "∂_xδ sum levels (needs k < n ≤ depth)",
            index: n,
            limit: c.depth(),
        });
    }
    let fk = c.level(k)?;
    let fnn = c.level(n)?;
    let pts = fnn.bx().random_points(points, seed);
    let rel = pts
        .par_iter()
        .map(|w| -> Result<f64> {
            let lhs = fnn.jet(*w)?.1[2][0];
            let chain = uniform_chain(c, k, n, Letter::C, *w)?;
            let head = fk.jet(chain[0])?.1[2][0];
            let mut sum = head;
            let mut mag = head.abs();
            for i in k..n {
                let q = q_function(c, i, chain[i - k][0])?;
                sum -= q;
                mag += q.abs();
            }
            Ok(rel_to(lhs, sum, mag))
        })
        .collect::<Result<Vec<_>>>()?;
    let limit_lhs = fk.jet(tips.critical(k)?)?.1[2][0];
    let mut partial_sums = Vec::new();
    let mut tails = Vec::new();
    let mut s = 0.0;
    for i in k..c.depth() {
        s += q_function(c, i, tips.critical(i)?[0])?;
        partial_sums.push(s);
        tails.push((limit_lhs - s).abs());
    }
    Ok(DxSumReport {
        k,
        n,
        max_rel: rel.iter().copied().fold(0.0, f64::max),
        limit_lhs,
        tail_rate: rate_fit(&tails),
        partial_sums,
        tails,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DyRelationReport {
    pub k: usize,
    pub n: usize,
    pub max_rel: f64,
    /// `max_w |∂_yδ_k/∂_zδ_k ∘ Ψⁿ_{k,v} + Σ q_i(π_y Ψⁿ_{i,v})|` for each
    /// `m = k+1..depth`.
    pub brackets: Vec<f64>,
    /// Fitted slope of `log bracket` against `m − k`.
    pub slope: Option<f64>,
    /// `log|σ|` for comparison with `slope`.
    pub log_sigma: f64,
}

/// `(∂_yδ_k, ∂_zδ_k)` at `Ψ^n_{k,v}(w)` with `Σ q_i(π_y Ψ^n_{i,v}(w))` and `Σ |q_i|`.
fn dy_terms(c: &RenormCascade, k: usize, n: usize, w: P3) -> Result<(f64, f64, f64, f64)> {
    let chain = uniform_chain(c, k, n, Letter::V, w)?;
    let gk = c.level(k)?.jet(chain[0])?.1[2];
    let mut qsum = 0.0;
    let mut qmag = 0.0;
    for i in k..n {
        let q = q_function(c, i, chain[i - k][1])?;
        qsum += q;
        qmag += q.abs();
    }
    Ok((gk[1], gk[2], qsum, qmag))
}

/// `∂_yδ_n · ∂_zδ_k∘Ψ = ∂_zδ_n · [∂_yδ_k∘Ψ + Σ q_i(π_y Ψ^n_{i,v}) · ∂_zδ_k∘Ψ]`
/// with `Ψ = Ψ^n_{k,v}(w)`, plus the decay of the bracket
/// `∂_yδ_k/∂_zδ_k ∘ Ψ + Σ q_i` in `n − k`.
pub fn check_dy_delta_relation(
    c: &RenormCascade,
    k: usize,
    n: usize,
    points: usize,
    seed: u64,
) -> Result<DyRelationReport> {
    if !(k < n && n <= c.depth()) {
        return Err(Error::Index {
            what: "∂_yδ relation levels (needs k < n ≤ depth)",
            index: n,
            limit: c.depth(),
        });
    }
    let fnn = c.level(n)?;
    let pts = fnn.bx().random_points(points, seed);
    let rel = pts
        .par_iter()
        .map(|w| -> Result<f64> {
            let dn = fnn.jet(*w)?.1[2];
            let (dy, dz, qsum, qmag) = dy_terms(c, k, n, *w)?;
            let lhs = dn[1] * dz;
            let rhs = dn[2] * (dy + qsum * dz);
            let mag = (dn[2] * dy).abs() + (dn[2] * dz).abs() * qmag + lhs.abs();
            Ok(rel_to(lhs, rhs, mag))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut brackets = Vec::new();
    for m in k + 1..=c.depth() {
        let bx = *c.level(m)?.bx();
        let worst = bx
            .random_points(points.clamp(1, 16), seed ^ 0x5bd1_e995)
            .par_iter()
            .map(|w| -> Result<f64> {
                let (dy, dz, qsum, _) = dy_terms(c, k, m, *w)?;
                if dz == 0.0 {
                    return Err(Error::Degenerate(format!("∂_zδ_{k} vanishes")));
                }
                Ok((dy / dz + qsum).abs())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        brackets.push(worst);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = brackets
        .iter()
        .enumerate()
        .filter(|(_, b)| **b > 0.0)
        .map(|(i, b)| ((i + 1) as f64, b.ln()))
        .unzip();
    Ok(DyRelationReport {
        k,
        n,
        max_rel: rel.iter().copied().fold(0.0, f64::max),
        slope: line_fit(&xs, &ys).map(|f| f.0),
        log_sigma: c.sigma(k)?.abs().ln(),
        brackets,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassNReport {
    /// `(k, max |residual|, max |residual / ∂_zδ∘F|)` for every checked level.
    pub levels: Vec<(usize, f64, f64)>,
}

impl ClassNReport {
    pub fn max_abs(&self) -> f64 {
        self.levels.iter().map(|l| l.1).fold(0.0, f64::max)
    }
}

/// Class-𝒩 residual `∂_yδ∘F + ∂_zδ∘F·∂_xδ` of `F_k` on `ψ^{k+1}_v(B) ∪
/// ψ^{k+1}_c(B)`, sampled on an `m³` lattice of `B`, for `k = 0..depth−1`.
pub fn class_n_invariance(c: &RenormCascade, lattice: usize) -> Result<ClassNReport> {
    let mut levels = Vec::new();
    for k in 0..c.depth() {
        let fk = c.level(k)?;
        let body = c.body(k + 1)?;
        let lat = c.level(k + 1)?.bx().lattice(lattice);
        let rows = lat
            .par_iter()
            .map(|p| -> Result<(f64, f64)> {
                let (pv, pc) = body.psi_pair(*p)?;
                let mut a = 0.0f64;
                let mut r = 0.0f64;
                for w in [pv, pc] {
                    let (img, m1) = fk.jet(w)?;
                    let m2 = fk.jet(img)?.1;
                    let t1 = m2[2][1];
                    let t2 = m2[2][2] * m1[2][0];
                    let res = (t1 + t2).abs();
                    a = a.max(res);
                    r = r.max(res / m2[2][2].abs());
                }
                Ok((a, r))
            })
            .collect::<Result<Vec<_>>>()?;
        levels.push((
            k,
            rows.iter().map(|x| x.0).fold(0.0, f64::max),
            rows.iter().map(|x| x.1).fold(0.0, f64::max),
        ));
    }
    Ok(ClassNReport { levels })
}

/// `b₂`, `b₁`, `b_F`, the rate fit and `a(x)` on an x-grid at level `n_a`.
pub fn universal_numbers(
    c: &RenormCascade,
    tips: &TipData,
    nmax: usize,
    n_a: usize,
    seed: u64,
) -> Result<(UniversalNumbers, B2Estimate, B1Estimate)> {
    let b2 = estimate_b2(c, tips, nmax)?;
    let b1 = estimate_b1(c, tips, b2.b2, nmax, seed)?;
    let a_samples = (0..=8)
        .map(|i| {
            let x = -0.8 + 0.2 * i as f64;
            Ok((x, universal_a(c, tips, b1.b_f, x, n_a)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        UniversalNumbers {
            b2: b2.b2,
            b1: b1.b1,
            b_f: b1.b_f,
            rho_fit: b2.rho_fit,
            a_samples,
        },
        b2,
        b1,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (s, i) = line_fit(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-14 && (i + 1.0).abs() < 1e-14);
        assert!(line_fit(&[1.0], &[2.0]).is_none());
    }

    #[test]
    fn rate_fit_of_geometric_sequence() {
        let v: Vec<f64> = (0..6).map(|i| 3.0 * 0.4f64.powi(i)).collect();
        assert!((rate_fit(&v).unwrap() - 0.4).abs() < 1e-12);
        assert!(rate_fit(&[0.0, 0.0]).is_none());
    }

    #[test]
    fn relative_residual_conventions() {
        assert_eq!(rel_to(0.0, 0.0, 0.0), 0.0);
        assert_eq!(rel_to(1.0, 1.0, 0.0), 0.0);
        assert!(rel_to(1.0, 0.0, 0.0).is_infinite());
        assert!((rel_to(1.0, 1.5, 2.0) - 0.25).abs() < 1e-16);
    }
}
