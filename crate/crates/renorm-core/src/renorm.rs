//! Renormalization of Hénon-like maps.
//!
//! For a map `F` the straightening is `H(w) = (π_x F(w), y, z − p(y))` with
//! `p(y) = δ(y, f⁻¹(y), 0)` on the branch `x ≥ 0`. The renormalization is
//! `RF = Λ ∘ H ∘ F² ∘ H⁻¹ ∘ Λ⁻¹` with `Λ(w) = w / σ`. The coordinate changes
//! are `ψ_v = H⁻¹ ∘ Λ⁻¹` and `ψ_c = F ∘ ψ_v`.
//!
//! Nothing is refitted: a renormalized map evaluates the composition of its
//! parent, so one evaluation of `F_n` costs a number of base evaluations that
//! grows geometrically in `n` (about `(m + 4)ⁿ` for values and `5ⁿ` jets for
//! derivatives, with `m` the number of straightening iterations, typically 3
//! or 4). Derivatives are propagated exactly by jets at each level and chained
//! by 3×3 products.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::cantor::{Letter, Word};
use crate::error::{Error, Result};
use crate::hmap3::{HenonMap3, MapBody};
use crate::jet::{matmul, rowmul, M3, P3};
use crate::unimodal::{
    even_fit_samples, odd_fit_samples, Branch, UnimodalMap, EXTENDED_XMAX, REFIT_DEGREE,
};

/// Settings of the iteration that inverts the straightening.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StraighteningSolve {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for StraighteningSolve {
    fn default() -> Self {
        StraighteningSolve {
            tol: 1e-12,
            max_iters: 100,
        }
    }
}

/// A stalled straightening iterate is accepted up to this multiple of the
/// tolerance.
pub const STALL_FACTOR: f64 = 1e4;

/// Result of `H⁻¹(u)`: the point, its image under `F` and solver data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preimage {
    pub point: P3,
    pub image: P3,
    pub iters: usize,
    pub residual: f64,
}

/// The straightening `H` of a map and its inverse.
#[derive(Clone, Debug)]
pub struct Straightening {
    map: HenonMap3,
    solve: StraighteningSolve,
    /// Odd part of the slice `x ↦ π_x F(x, 0, 0)`, which the even `f` misses;
    /// used only to start the inversion closer to the solution.
    odd: OnceLock<Vec<f64>>,
}

/// Number of odd coefficients in the starting-guess correction.
const ODD_TERMS: usize = 6;

impl Straightening {
    pub fn new(map: &HenonMap3, solve: StraighteningSolve) -> Self {
        Straightening {
            map: map.clone(),
            solve,
            odd: OnceLock::new(),
        }
    }

    pub fn map(&self) -> &HenonMap3 {
        &self.map
    }

    fn finv(&self, y: f64) -> Result<f64> {
        self.map.f().inverse_within(y, Branch::Plus, EXTENDED_XMAX)
    }

    fn odd_part(&self) -> &[f64] {
        self.odd.get_or_init(|| {
            let samples = self.map.slice_samples();
            let nodes: Vec<f64> = samples.iter().map(|s| s[0]).collect();
            let values: Vec<f64> = samples.iter().map(|s| 0.5 * (s[1] - s[2])).collect();
            odd_fit_samples(&nodes, &values, ODD_TERMS).unwrap_or_default()
        })
    }

    /// Root of `f(X) + o(X) = y` near `f⁻¹(y)`, with `o` the odd part of
    /// the slice; falls back to `f⁻¹(y)`.
    fn start(&self, y: f64) -> Result<f64> {
        let x0 = self.finv(y)?;
        let odd = self.odd_part();
        if odd.is_empty() {
            return Ok(x0);
        }
        let f = self.map.f();
        let mut x = x0;
        for _ in 0..4 {
            let (mut o, mut d) = (0.0, 0.0);
            for (j, b) in odd.iter().enumerate() {
                let p = 2 * j as i32 + 1;
                o += b * x.powi(p);
                d += b * p as f64 * x.powi(p - 1);
            }
            let (fv, fd) = f.value_deriv(x);
            let r = fv + o - y;
            x -= r / (fd + d);
            if r.abs() <= 1e-15 {
                break;
            }
        }
        Ok(if x.is_finite() && (0.0..=EXTENDED_XMAX).contains(&x) {
            x
        } else {
            x0
        })
    }

    /// `p(y) = δ(y, f⁻¹(y), 0)`.
    pub fn p(&self, y: f64) -> Result<f64> {
        let r = self.finv(y)?;
        Ok(self.map.value([y, r, 0.0])?[2])
    }

    /// `p(y)` and `q(y) = p'(y) = ∂_xδ + ∂_yδ / f'(f⁻¹(y))`.
    pub fn pq(&self, y: f64) -> Result<(f64, f64)> {
        let r = self.finv(y)?;
        let (v, m) = self.map.jet([y, r, 0.0])?;
        let fr = self.map.f().deriv(r);
        if fr == 0.0 {
            return Err(Error::domain("q at the critical value", &[y]));
        }
        Ok((v[2], m[2][0] + m[2][1] / fr))
    }

    /// `H(w) = (π_x F(w), y, z − p(y))`.
    pub fn h(&self, w: P3) -> Result<P3> {
        let fx = self.map.value(w)?[0];
        Ok([fx, w[1], w[2] - self.p(w[1])?])
    }

    /// `H⁻¹(u) = (X, u_y, u_z + p(u_y))` where `π_x F(X, u_y, u_z + p) = u_x`,
    /// solved from `X = f⁻¹(u_x)`.
    pub fn h_inv(&self, u: P3) -> Result<Preimage> {
        let p = self.p(u[1])?;
        self.h_inv_with(u, p)
    }

    /// Secant iteration on `X ↦ π_x F(X, u_y, u_z + p) − u_x`. The first step
    /// and any secant step that would jump further than twice the previous
    /// one use `X ← f⁻¹(u_x + f(X) − π_x F(X, …))` instead.
    pub(crate) fn h_inv_with(&self, u: P3, p: f64) -> Result<Preimage> {
        let f = self.map.f();
        let z = u[2] + p;
        let mut x = self.start(u[0])?;
        let mut prev: Option<(f64, f64)> = None;
        let mut best: Option<Preimage> = None;
        let mut stalls = 0;
        for it in 0..self.solve.max_iters {
            let w = [x, u[1], z];
            let img = self.map.value(w)?;
            let r = img[0] - u[0];
            let residual = r.abs();
            let here = Preimage {
                point: w,
                image: img,
                iters: it + 1,
                residual,
            };
            if residual <= self.solve.tol {
                return Ok(here);
            }
            let best_res = best.as_ref().map_or(f64::INFINITY, |b| b.residual);
            if residual < 0.5 * best_res {
                stalls = 0;
            } else {
                stalls += 1;
            }
            if residual < best_res {
                best = Some(here);
            }
            // A stalled iterate has reached the round-off floor of π_x F,
            // which grows with the renormalization level.
            if stalls >= 3 {
                let b = best.expect("a best iterate exists after the first step");
                if b.residual <= STALL_FACTOR * self.solve.tol {
                    return Ok(b);
                }
                return Err(Error::NotConverged {
                    what: "straightening inverse",
                    iters: it + 1,
                    residual: b.residual,
                });
            }
            let secant = prev.and_then(|(xp, rp)| {
                let dr = r - rp;
                if dr == 0.0 {
                    return None;
                }
                let step = r * (x - xp) / dr;
                (step.abs() <= 2.0 * (x - xp).abs()).then_some(x - step)
            });
            let next = match secant {
                Some(xn) => xn,
                None => self
                    .finv(u[0] + f.value(x) - img[0])
                    .map_err(|_| Error::NotConverged {
                        what: "straightening inverse (left the branch range)",
                        iters: it + 1,
                        residual,
                    })?,
            };
            prev = Some((x, r));
            x = next;
        }
        Err(Error::NotConverged {
            what: "straightening inverse",
            iters: self.solve.max_iters,
            residual: best.map_or(f64::INFINITY, |b| b.residual),
        })
    }
}

/// Renormalized level `F_{k+1} = R F_k`.
#[derive(Debug)]
pub struct Level {
    st: Straightening,
    sigma: f64,
}

/// Values along the chain `v₁ = ψ_v(w)`, `v₂ = F(v₁)`, `v₃ = F(v₂)`.
#[derive(Clone, Copy, Debug)]
struct Chain {
    v1: P3,
    v2: P3,
}

/// `ψ_v`, `ψ_c` at a point together with their derivatives.
#[derive(Clone, Copy, Debug)]
pub struct PsiJet {
    pub v: P3,
    pub dv: M3,
    pub c: P3,
    pub dc: M3,
    /// `DF(ψ_v(w))`.
    pub df_v: M3,
}

impl Level {
    /// Builds `R F` with `σ = π_x(H F² H⁻¹)(0)`.
    pub fn new(parent: &HenonMap3, solve: StraighteningSolve) -> Result<Self> {
        let st = Straightening::new(parent, solve);
        let pre = st.h_inv([0.0, 0.0, 0.0])?;
        let v3 = parent.value(pre.image)?;
        let v4 = parent.value(v3)?;
        let sigma = v4[0];
        if !(sigma < 0.0 && sigma > -1.0) {
            return Err(Error::NotRenormalizable(format!(
                "scaling σ = {sigma} outside (-1, 0)"
            )));
        }
        Ok(Level { st, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn parent(&self) -> &HenonMap3 {
        self.st.map()
    }

    pub fn straightening(&self) -> &Straightening {
        &self.st
    }

    fn chain(&self, w: P3) -> Result<Chain> {
        let s = self.sigma;
        let u = [s * w[0], s * w[1], s * w[2]];
        let pre = self.st.h_inv(u)?;
        Ok(Chain {
            v1: pre.point,
            v2: pre.image,
        })
    }

    /// `ψ_v(w) = H⁻¹(σ w)`.
    pub fn psi_v(&self, w: P3) -> Result<P3> {
        Ok(self.chain(w)?.v1)
    }

    /// `ψ_c(w) = F(ψ_v(w))`.
    pub fn psi_c(&self, w: P3) -> Result<P3> {
        Ok(self.chain(w)?.v2)
    }

    /// `(ψ_v(w), ψ_c(w))`.
    pub fn psi_pair(&self, w: P3) -> Result<(P3, P3)> {
        let ch = self.chain(w)?;
        Ok((ch.v1, ch.v2))
    }

    pub fn psi(&self, letter: Letter, w: P3) -> Result<P3> {
        let ch = self.chain(w)?;
        Ok(match letter {
            Letter::V => ch.v1,
            Letter::C => ch.v2,
        })
    }

    /// Both coordinate changes with exact derivatives.
    pub fn psi_jet(&self, w: P3) -> Result<PsiJet> {
        let s = self.sigma;
        let u = [s * w[0], s * w[1], s * w[2]];
        let (p, q) = self.st.pq(u[1])?;
        let pre = self.st.h_inv_with(u, p)?;
        let (img, j1) = self.st.map().jet(pre.point)?;
        let a = j1[0][0];
        if a == 0.0 {
            return Err(Error::Degenerate(
                "∂_x π_x F vanishes at the straightening preimage".into(),
            ));
        }
        let dy = [0.0, s, 0.0];
        let dz = [0.0, q * s, s];
        let mut dx = [0.0; 3];
        for i in 0..3 {
            let e = if i == 0 { s } else { 0.0 };
            dx[i] = (e - j1[0][1] * dy[i] - j1[0][2] * dz[i]) / a;
        }
        let dv = [dx, dy, dz];
        let mut dc = matmul(&j1, &dv);
        // π_x ψ_c = σ x exactly; keeping the row exact avoids cancellation.
        dc[0] = [s, 0.0, 0.0];
        Ok(PsiJet {
            v: pre.point,
            dv,
            c: img,
            dc,
            df_v: j1,
        })
    }

    pub fn psi_letter_jet(&self, letter: Letter, w: P3) -> Result<(P3, M3)> {
        let pj = self.psi_jet(w)?;
        Ok(match letter {
            Letter::V => (pj.v, pj.dv),
            Letter::C => (pj.c, pj.dc),
        })
    }
}

impl MapBody for Level {
    fn value(&self, w: P3) -> Result<P3> {
        let s = self.sigma;
        let ch = self.chain(w)?;
        let parent = self.st.map();
        let v3 = parent.value(ch.v2)?;
        let v4 = parent.value(v3)?;
        let pux = self.st.p(s * w[0])?;
        Ok([v4[0] / s, w[0], (v3[2] - pux) / s])
    }

    fn jet(&self, w: P3) -> Result<(P3, M3)> {
        let s = self.sigma;
        let pj = self.psi_jet(w)?;
        let parent = self.st.map();
        let (v3, j2) = parent.jet(pj.c)?;
        let (v4, j3) = parent.jet(v3)?;
        let (pux, qux) = self.st.pq(s * w[0])?;
        let mut dv3 = matmul(&j2, &pj.dc);
        dv3[1] = pj.dc[0];
        let r0 = rowmul(&j3[0], &dv3);
        let r2 = rowmul(&j2[2], &pj.dc);
        let value = [v4[0] / s, w[0], (v3[2] - pux) / s];
        let d = [
            [r0[0] / s, r0[1] / s, r0[2] / s],
            [1.0, 0.0, 0.0],
            [(r2[0] - qux * s) / s, r2[1] / s, r2[2] / s],
        ];
        Ok((value, d))
    }
}

/// `P R F(u) = H ∘ F² ∘ H⁻¹(u)`, evaluated step by step.
pub fn prerenormalize(map: &HenonMap3, u: P3, solve: StraighteningSolve) -> Result<P3> {
    let st = Straightening::new(map, solve);
    let pre = st.h_inv(u)?;
    let v3 = map.value(pre.image)?;
    st.h(v3)
}

/// Least-squares fit of the even part of the slice `x ↦ π_x F(x, 0, 0)` as
/// the one-dimensional part, with the constant term pinned to 1.
///
/// The fit is rejected unless it decreases on `[0, EXTENDED_XMAX]`, where the
/// straightening inverts it.
pub fn fit_slice(map: &HenonMap3, degree: usize) -> Result<UnimodalMap> {
    let samples = map.slice_samples();
    let nodes: Vec<f64> = samples.iter().map(|s| s[0]).collect();
    let values: Vec<f64> = samples.iter().map(|s| 0.5 * (s[1] + s[2])).collect();
    let (coeffs, _) = even_fit_samples(&nodes, &values, degree, Some(1.0))?;
    let f = UnimodalMap::new_unchecked(coeffs)?;
    let mut prev = f.value(0.0);
    for i in 1..=64 {
        let v = f.value(EXTENDED_XMAX * i as f64 / 64.0);
        if !(v < prev) {
            return Err(Error::InvalidMap("refitted slice is not decreasing".into()));
        }
        prev = v;
    }
    Ok(f)
}

/// `R F` and its scaling `σ`.
pub fn renormalize(map: &HenonMap3, solve: StraighteningSolve) -> Result<(HenonMap3, f64)> {
    let level = Arc::new(Level::new(map, solve)?);
    let sigma = level.sigma;
    let fallback = map.f().clone();
    let degree = fallback.degree().max(REFIT_DEGREE);
    let fit = move |m: &HenonMap3| fit_slice(m, degree).unwrap_or_else(|_| fallback.clone());
    let out = HenonMap3::with_body(
        level.clone(),
        None,
        Some(Box::new(fit)),
        *map.bx(),
        "renormalized",
    );
    // π_y ∘ H ∘ F² ∘ H⁻¹(u) = u_x up to the straightening tolerance.
    for u in [[0.1 * sigma, 0.0, 0.0], [-0.3 * sigma, 0.2 * sigma, 0.0]] {
        let pr = prerenormalize(map, u, solve)?;
        let lost = (pr[1] - u[0]).abs();
        if lost > 1e-9 {
            return Err(Error::HenonFormLost(lost));
        }
    }
    Ok((out, sigma))
}

/// The cascade `F₀, …, F_N` with cached scalings and coordinate changes.
#[derive(Clone, Debug)]
pub struct RenormCascade {
    levels: Vec<HenonMap3>,
    bodies: Vec<Arc<Level>>,
    solve: StraighteningSolve,
}

impl RenormCascade {
    pub fn build(seed: HenonMap3, depth: usize, solve: StraighteningSolve) -> Result<Self> {
        let mut levels = vec![seed];
        let mut bodies = Vec::with_capacity(depth);
        for k in 0..depth {
            let parent = levels[k].clone();
            let level = Arc::new(Level::new(&parent, solve).map_err(|e| e.at_level(k))?);
            let fallback = parent.f().clone();
            let degree = fallback.degree().max(REFIT_DEGREE);
            let fit =
                move |m: &HenonMap3| fit_slice(m, degree).unwrap_or_else(|_| fallback.clone());
            let next = HenonMap3::with_body(
                level.clone(),
                None,
                Some(Box::new(fit)),
                *parent.bx(),
                "renormalized",
            );
            bodies.push(level);
            levels.push(next);
        }
        Ok(RenormCascade {
            levels,
            bodies,
            solve,
        })
    }

    pub fn depth(&self) -> usize {
        self.bodies.len()
    }

    pub fn solve(&self) -> StraighteningSolve {
        self.solve
    }

    pub fn levels(&self) -> &[HenonMap3] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> Result<&HenonMap3> {
        self.levels.get(k).ok_or(Error::Index {
            what: "level",
            index: k,
            limit: self.depth(),
        })
    }

    /// `σ_k`, the scaling of `F_{k+1} = R F_k`.
    pub fn sigma(&self, k: usize) -> Result<f64> {
        Ok(self.body(k + 1)?.sigma)
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.bodies.iter().map(|b| b.sigma).collect()
    }

    /// Body of `F_j = R F_{j−1}`, which holds `ψ^j_v` and `ψ^j_c`.
    pub fn body(&self, j: usize) -> Result<&Level> {
        if j == 0 || j > self.depth() {
            return Err(Error::Index {
                what: "coordinate change level",
                index: j,
                limit: self.depth(),
            });
        }
        Ok(&self.bodies[j - 1])
    }

    /// `ψ^j_w(x)`.
    pub fn psi(&self, j: usize, letter: Letter, x: P3) -> Result<P3> {
        self.body(j)?.psi(letter, x).map_err(|e| e.at_level(j))
    }

    pub fn psi_jet(&self, j: usize, letter: Letter, x: P3) -> Result<(P3, M3)> {
        self.body(j)?
            .psi_letter_jet(letter, x)
            .map_err(|e| e.at_level(j))
    }

    fn check_word(&self, k: usize, word: &Word) -> Result<()> {
        if k + word.len() > self.depth() {
            return Err(Error::Index {
                what: "k + word length",
                index: k + word.len(),
                limit: self.depth(),
            });
        }
        Ok(())
    }

    /// `Ψ^{k+|w|}_{k,w} = ψ^{k+1}_{w₁} ∘ ⋯ ∘ ψ^{k+|w|}_{w_{|w|}}`.
    pub fn psi_word(&self, k: usize, word: &Word, x: P3) -> Result<P3> {
        self.check_word(k, word)?;
        let mut p = x;
        for i in (0..word.len()).rev() {
            p = self.psi(k + 1 + i, word.letter(i), p)?;
        }
        Ok(p)
    }

    /// `Ψ^{k+|w|}_{k,w}` and its derivative.
    pub fn psi_word_jet(&self, k: usize, word: &Word, x: P3) -> Result<(P3, M3)> {
        self.check_word(k, word)?;
        let mut p = x;
        let mut d = crate::jet::IDENTITY;
        for i in (0..word.len()).rev() {
            let (q, m) = self.psi_jet(k + 1 + i, word.letter(i), p)?;
            d = matmul(&m, &d);
            p = q;
        }
        Ok((p, d))
    }

    /// `Ψⁿ_{k,v}` for `n = k + m`.
    pub fn psi_v_power(&self, k: usize, n: usize, x: P3) -> Result<P3> {
        self.psi_word(k, &Word::uniform(Letter::V, n.saturating_sub(k)), x)
    }
}

/// Relative size of `|a − b|` against `|b|` with an absolute floor.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// `max_i |a_i − b_i|`.
pub fn max_abs_diff(a: &P3, b: &P3) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}
