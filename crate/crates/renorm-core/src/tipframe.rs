//! Tip-centred decomposition of the conjugations `Ψⁿₖ`.
//!
//! With `Ψⁿₖ(w) = Ψⁿ_{k,v}(w + τ_n) − τ_k` the map splits as
//!
//! ```text
//!         ⎛1 t u⎞ ⎛α     ⎞ ⎛x + S(w)⎞
//! Ψⁿₖ(w) = ⎜  1  ⎟ ⎜  σ   ⎟ ⎜   y   ⎟
//!         ⎝  d 1⎠ ⎝     σ⎠ ⎝z + R(y)⎠
//! ```
//!
//! so that `Dⁿₖ = DΨⁿₖ(0)` has rows `(α, σt, σu)`, `(0, σ, 0)`, `(0, σd, σ)`.
//! The unipotent factor multiplies the diagonal one from the left, hence
//! `t = D_xy/σ` carries no `u·d` correction: `S` and `R` have no linear part,
//! and `u·R(y)` is quadratic in `y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::{Letter, TipData, Word};
use crate::error::{Error, Result};
use crate::jet::{sub3, M3, P3};
use crate::renorm::RenormCascade;
use crate::universal::{line_fit, q_function, rel_to};

/// Smallest `|σ_{n,k}|` for which the frame is extracted.
pub const SIGMA_FLOOR: f64 = 1e-300;

/// Number of `y` samples used for `‖R‖` and the recursion checks.
pub const R_GRID: usize = 64;

/// Frame numbers of `Ψⁿₖ` at the tip.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameDecomposition {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub sigma_nk: f64,
    pub t: f64,
    pub u: f64,
    pub d: f64,
    /// `Dⁿₖ = DΨⁿ_{k,v}(τ_n)`.
    pub d_matrix: M3,
    pub tau_n: P3,
    /// `Ψⁿ_{k,v}(τ_n)`.
    pub tau_k: P3,
}

/// One CSV row of the frame table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameRow {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub sigma_nk: f64,
    pub t: f64,
    pub u: f64,
    pub d: f64,
    pub r_norm: f64,
    pub r_prime_norm: f64,
    /// Least-squares `y²` coefficient of `R`.
    pub a_nk: f64,
}

impl FrameDecomposition {
    fn word(&self) -> Word {
        Word::uniform(Letter::V, self.n - self.k)
    }

    /// Tip-translated `Ψⁿₖ(w)`.
    pub fn psi(&self, c: &RenormCascade, w: P3) -> Result<P3> {
        let p = [
            w[0] + self.tau_n[0],
            w[1] + self.tau_n[1],
            w[2] + self.tau_n[2],
        ];
        Ok(sub3(&c.psi_word(self.k, &self.word(), p)?, &self.tau_k))
    }

    fn psi_jet(&self, c: &RenormCascade, w: P3) -> Result<(P3, M3)> {
        let p = [
            w[0] + self.tau_n[0],
            w[1] + self.tau_n[1],
            w[2] + self.tau_n[2],
        ];
        let (v, m) = c.psi_word_jet(self.k, &self.word(), p)?;
        Ok((sub3(&v, &self.tau_k), m))
    }

    /// `R(y) = π_zΨⁿₖ(0, y, 0)/σ − d·y`.
    pub fn r(&self, c: &RenormCascade, y: f64) -> Result<f64> {
        Ok(self.psi(c, [0.0, y, 0.0])?[2] / self.sigma_nk - self.d * y)
    }

    /// `R'(y)` from the derivative of `π_zΨⁿₖ`.
    pub fn r_prime(&self, c: &RenormCascade, y: f64) -> Result<f64> {
        Ok(self.psi_jet(c, [0.0, y, 0.0])?.1[2][1] / self.sigma_nk - self.d)
    }

    /// `S(w)` from the first coordinate after removing the unipotent factor.
    pub fn s(&self, c: &RenormCascade, w: P3) -> Result<f64> {
        let px = self.psi(c, w)?[0];
        let zr = w[2] + self.r(c, w[1])?;
        Ok((px - self.sigma_nk * (self.t * w[1] + self.u * zr)) / self.alpha - w[0])
    }

    /// The frame formula evaluated with the extracted `S` and `R`.
    pub fn assemble(&self, c: &RenormCascade, w: P3) -> Result<P3> {
        let xs = w[0] + self.s(c, w)?;
        let zr = w[2] + self.r(c, w[1])?;
        let s = self.sigma_nk;
        Ok([
            self.alpha * xs + s * self.t * w[1] + s * self.u * zr,
            s * w[1],
            s * self.d * w[1] + s * zr,
        ])
    }

    /// Range of the translated `y` over the level-`n` box.
    pub fn y_range(&self, c: &RenormCascade) -> Result<(f64, f64)> {
        let bx = c.level(self.n)?.bx();
        Ok((bx.lo[1] - self.tau_n[1], bx.hi[1] - self.tau_n[1]))
    }

    /// `R_GRID` translated `y` values strictly inside the box.
    pub fn y_grid(&self, c: &RenormCascade) -> Result<Vec<f64>> {
        let (lo, hi) = self.y_range(c)?;
        let pad = 1e-3 * (hi - lo);
        Ok((0..R_GRID)
            .map(|i| lo + pad + (hi - lo - 2.0 * pad) * i as f64 / (R_GRID - 1) as f64)
            .collect())
    }

    pub fn row(&self, c: &RenormCascade) -> Result<FrameRow> {
        let ys = self.y_grid(c)?;
        let mut r_norm = 0.0f64;
        let mut rp_norm = 0.0f64;
        let mut rs = Vec::with_capacity(ys.len());
        for &y in &ys {
            let r = self.r(c, y)?;
            r_norm = r_norm.max(r.abs());
            rp_norm = rp_norm.max(self.r_prime(c, y)?.abs());
            rs.push(r);
        }
        Ok(FrameRow {
            k: self.k,
            n: self.n,
            alpha: self.alpha,
            sigma_nk: self.sigma_nk,
            t: self.t,
            u: self.u,
            d: self.d,
            r_norm,
            r_prime_norm: rp_norm,
            a_nk: quadratic_cubic_fit(&ys, &rs)[0],
        })
    }
}

/// Least squares `r ≈ a y² + A y³`, returned as `[a, A]`.
fn quadratic_cubic_fit(ys: &[f64], rs: &[f64]) -> [f64; 2] {
    let (mut s4, mut s5, mut s6, mut b2, mut b3) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&y, &r) in ys.iter().zip(rs) {
        let y2 = y * y;
        s4 += y2 * y2;
        s5 += y2 * y2 * y;
        s6 += y2 * y2 * y2;
        b2 += r * y2;
        b3 += r * y2 * y;
    }
    let det = s4 * s6 - s5 * s5;
    if det == 0.0 {
        return [0.0, 0.0];
    }
    [(b2 * s6 - b3 * s5) / det, (s4 * b3 - s5 * b2) / det]
}

/// Frame of `Ψⁿₖ` at the tip `τ_n`.
pub fn decompose(
    c: &RenormCascade,
    tips: &TipData,
    k: usize,
    n: usize,
) -> Result<FrameDecomposition> {
    if !(k < n && n <= c.depth()) {
        return Err(Error::Index {
            what: "frame level n (needs k < n ≤ depth)",
            index: n,
            limit: c.depth(),
        });
    }
    let tau_n = tips.tip(n)?;
    let (tau_k, dm) = c.psi_word_jet(k, &Word::uniform(Letter::V, n - k), tau_n)?;
    let sigma_nk = dm[1][1];
    if !(sigma_nk.abs() >= SIGMA_FLOOR) {
        return Err(Error::Degenerate(format!(
            "|σ_{{{n},{k}}}| = {:e} below {SIGMA_FLOOR:e}",
            sigma_nk.abs()
        )));
    }
    Ok(FrameDecomposition {
        k,
        n,
        alpha: dm[0][0],
        sigma_nk,
        t: dm[0][1] / sigma_nk,
        u: dm[0][2] / sigma_nk,
        d: dm[2][1] / sigma_nk,
        d_matrix: dm,
        tau_n,
        tau_k,
    })
}

/// Frames for every pair `k < n ≤ depth`, ordered by `(k, n)`.
pub fn all_frames(c: &RenormCascade, tips: &TipData) -> Result<Vec<FrameDecomposition>> {
    let pairs: Vec<(usize, usize)> = (0..c.depth())
        .flat_map(|k| (k + 1..=c.depth()).map(move |n| (k, n)))
        .collect();
    pairs
        .par_iter()
        .map(|&(k, n)| decompose(c, tips, k, n))
        .collect()
}

fn find(frames: &[FrameDecomposition], k: usize, n: usize) -> Result<&FrameDecomposition> {
    frames
        .iter()
        .find(|f| f.k == k && f.n == n)
        .ok_or(Error::Index {
            what: "missing frame",
            index: n,
            limit: k,
        })
}

/// Deviation of the frame formula from `Ψⁿₖ` and of `Dⁿₖ` from its shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReassemblyReport {
    pub k: usize,
    pub n: usize,
    /// Sup over the lattice of `|frame formula − Ψⁿₖ|`.
    pub max_abs: f64,
    /// Largest entry of `Dⁿₖ` that the frame shape sets to zero, and
    /// `|D_zz − D_yy|`.
    pub shape_defect: f64,
    /// `|R(0)| + |R'(0)| + |S(0)|`.
    pub linear_defect: f64,
}

/// Reassembly of `Ψⁿₖ` on an `m³` lattice of the translated level-`n` box.
pub fn reassembly_check(
    c: &RenormCascade,
    frame: &FrameDecomposition,
    lattice: usize,
) -> Result<ReassemblyReport> {
    let bx = c.level(frame.n)?.bx();
    let worst = bx
        .lattice(lattice)
        .par_iter()
        .map(|p| -> Result<f64> {
            let w = sub3(p, &frame.tau_n);
            let a = frame.assemble(c, w)?;
            let b = frame.psi(c, w)?;
            Ok((0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let m = frame.d_matrix;
    let shape_defect = [m[1][0], m[1][2], m[2][0], m[2][2] - m[1][1]]
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let linear_defect =
        frame.r(c, 0.0)?.abs() + frame.r_prime(c, 0.0)?.abs() + frame.s(c, [0.0; 3])?.abs();
    Ok(ReassemblyReport {
        k: frame.k,
        n: frame.n,
        max_abs: worst,
        shape_defect,
        linear_defect,
    })
}

/// `Dⁿₖ − Dᵐₖ·Dⁿₘ` for one triple.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CocycleRow {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub max_abs: f64,
}

/// Cocycle residual for every triple `k < m < n` present in `frames`.
pub fn check_cocycle(frames: &[FrameDecomposition]) -> Result<Vec<CocycleRow>> {
    let mut rows = Vec::new();
    for f in frames {
        for m in f.k + 1..f.n {
            let a = find(frames, f.k, m)?;
            let b = find(frames, m, f.n)?;
            let prod = crate::jet::matmul(&a.d_matrix, &b.d_matrix);
            let max_abs = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| (prod[i][j] - f.d_matrix[i][j]).abs())
                .fold(0.0, f64::max);
            rows.push(CocycleRow {
                k: f.k,
                m,
                n: f.n,
                max_abs,
            });
        }
    }
    Ok(rows)
}

/// Residuals of the four sums over single steps, relative to the measured
/// frame entry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DutRow {
    pub k: usize,
    pub n: usize,
    pub d_rel: f64,
    pub u_rel: f64,
    pub t_rel: f64,
    pub tud_rel: f64,
}

/// Result of [`check_dut_recursions`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DutReport {
    pub rows: Vec<DutRow>,
    /// `(i, |d_{i+1,i}|)` for the single steps.
    pub single_d: Vec<(usize, f64)>,
    /// Slope of `log|log|d_{i+1,i}||` against `i`; super-exponential decay
    /// `ε̄^{2ⁱ}` gives `ln 2`.
    pub d_doubling_slope: Option<f64>,
}

impl DutReport {
    pub fn max_d_rel(&self) -> f64 {
        self.rows.iter().map(|r| r.d_rel).fold(0.0, f64::max)
    }

    pub fn max_rel(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.d_rel.max(r.u_rel).max(r.t_rel).max(r.tud_rel))
            .fold(0.0, f64::max)
    }
}

/// The single-step sums for `d`, `u`, `t` and `t − u·d`, with weights
/// `Π_{j=k}^{i−1} α_{j+1,j}/σ_{j+1,j}` taken from the measured frames.
pub fn check_dut_recursions(frames: &[FrameDecomposition]) -> Result<DutReport> {
    let mut rows = Vec::new();
    let top = frames.iter().map(|f| f.n).max().unwrap_or(0);
    let d_of = |k: usize, n: usize| -> Result<f64> {
        if k == n {
            Ok(0.0)
        } else {
            Ok(find(frames, k, n)?.d)
        }
    };
    for f in frames {
        let (k, n) = (f.k, f.n);
        let mut weight = 1.0;
        let (mut ds, mut us, mut ts, mut tuds) = (0.0, 0.0, 0.0, 0.0);
        for i in k..n {
            let step = find(frames, i, i + 1)?;
            ds += step.d;
            us += weight * step.u;
            ts += weight * (step.t + step.u * d_of(i + 1, n)?);
            tuds += weight * (step.t - step.u * d_of(k, i + 1)?);
            weight *= step.alpha / step.sigma_nk;
        }
        let tud = f.t - f.u * f.d;
        rows.push(DutRow {
            k,
            n,
            d_rel: rel_to(f.d, ds, f.d.abs()),
            u_rel: rel_to(f.u, us, f.u.abs()),
            t_rel: rel_to(f.t, ts, f.t.abs()),
            tud_rel: rel_to(tud, tuds, tud.abs()),
        });
    }
    let single_d: Vec<(usize, f64)> = (0..top)
        .filter_map(|i| find(frames, i, i + 1).ok().map(|f| (i, f.d.abs())))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = single_d
        .iter()
        .filter(|(_, d)| *d > 0.0 && *d < 1.0)
        .map(|(i, d)| (*i as f64, (-d.ln()).ln()))
        .unzip();
    Ok(DutReport {
        rows,
        single_d,
        d_doubling_slope: line_fit(&xs, &ys).map(|l| l.0),
    })
}

/// One level of [`check_r_recursion`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RRow {
    pub n: usize,
    pub r_norm: f64,
    pub r_prime_norm: f64,
    /// Sup over the grid of `|Rⁿₖ(y) − Rⁿ_{n−1}(y) − Rⁿ⁻¹ₖ(σ_{n,n−1}y)/σ_{n,n−1}|`;
    /// zero at `n = k + 1`, where the second term vanishes.
    pub recursion_abs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RDecay {
    pub k: usize,
    pub rows: Vec<RRow>,
    /// Slope of `ln‖Rⁿₖ‖` against `n − k`.
    pub slope: Option<f64>,
    pub prime_slope: Option<f64>,
    /// Mean of `ln|σ_j|` over the scalings involved.
    pub log_sigma: f64,
}

impl RDecay {
    pub fn max_recursion_abs(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.recursion_abs)
            .fold(0.0, f64::max)
    }

    /// `slope / ln|σ|`.
    pub fn slope_ratio(&self) -> Option<f64> {
        self.slope.map(|s| s / self.log_sigma)
    }
}

/// Decay of `Rⁿₖ` for `n = k+1..depth` and the pointwise recursion.
pub fn check_r_recursion(c: &RenormCascade, tips: &TipData, k: usize) -> Result<RDecay> {
    if c.depth() < k + 3 {
        return Err(Error::Index {
            what: "R recursion level (needs depth − k ≥ 3)",
            index: k,
            limit: c.depth().saturating_sub(3),
        });
    }
    let rows = (k + 1..=c.depth())
        .into_par_iter()
        .map(|n| -> Result<RRow> {
            let f = decompose(c, tips, k, n)?;
            let row = f.row(c)?;
            let mut recursion_abs = 0.0f64;
            if n > k + 1 {
                let last = decompose(c, tips, n - 1, n)?;
                let inner = decompose(c, tips, k, n - 1)?;
                let s = last.sigma_nk;
                for y in f.y_grid(c)? {
                    let rhs = last.r(c, y)? + inner.r(c, s * y)? / s;
                    recursion_abs = recursion_abs.max((f.r(c, y)? - rhs).abs());
                }
            }
            Ok(RRow {
                n,
                r_norm: row.r_norm,
                r_prime_norm: row.r_prime_norm,
                recursion_abs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = |pick: fn(&RRow) -> f64| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| pick(r) > 0.0)
            .map(|r| ((r.n - k) as f64, pick(r).ln()))
            .unzip();
        line_fit(&xs, &ys).map(|l| l.0)
    };
    let sig = c.sigmas();
    let logs: Vec<f64> = sig[k..].iter().map(|s| s.abs().ln()).collect();
    Ok(RDecay {
        k,
        slope: fit(|r| r.r_norm),
        prime_slope: fit(|r| r.r_prime_norm),
        log_sigma: logs.iter().sum::<f64>() / logs.len() as f64,
        rows,
    })
}

/// Result of [`check_z_difference`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZDifferenceReport {
    pub k: usize,
    pub n: usize,
    pub pairs: usize,
    /// Sup of `|Δπ_zΨⁿₖ − σ(Δz + dΔy + ΔR)|`.
    pub max_abs: f64,
    /// Sup of `|Σ q_i(π_yΨⁿ_{i,v}(w)) − d − R'(y)|`.
    pub corollary_abs: f64,
    /// The same relative to `max(|Σ q_i|, |d|)`.
    pub corollary_rel: f64,
}

/// The `z`-difference formula at random pairs of the level-`n` box and the
/// derivative identity `Σ_{i=k}^{n−1} q_i(π_yΨⁿ_{i,v}(w)) = d_{n,k} + R'(π_y w)`.
pub fn check_z_difference(
    c: &RenormCascade,
    tips: &TipData,
    k: usize,
    n: usize,
    pairs: usize,
    seed: u64,
) -> Result<ZDifferenceReport> {
    let f = decompose(c, tips, k, n)?;
    let bx = *c.level(n)?.bx();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> P3 {
        let p: P3 = std::array::from_fn(|i| rng.gen_range(bx.lo[i]..=bx.hi[i]));
        p
    };
    let samples: Vec<(P3, P3)> = (0..pairs).map(|_| (draw(), draw())).collect();
    let rows = samples
        .par_iter()
        .map(|(p1, p2)| -> Result<(f64, f64, f64)> {
            let (w1, w2) = (sub3(p1, &f.tau_n), sub3(p2, &f.tau_n));
            let lhs = f.psi(c, w1)?[2] - f.psi(c, w2)?[2];
            let rhs = f.sigma_nk
                * ((w1[2] - w2[2]) + f.d * (w1[1] - w2[1]) + f.r(c, w1[1])? - f.r(c, w2[1])?);
            let mut qsum = 0.0;
            for i in k..n {
                let y = c.psi_word(i, &Word::uniform(Letter::V, n - i), *p1)?[1];
                qsum += q_function(c, i, y)?;
            }
            let cor = f.d + f.r_prime(c, w1[1])?;
            Ok((
                (lhs - rhs).abs(),
                (qsum - cor).abs(),
                qsum.abs().max(f.d.abs()),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ZDifferenceReport {
        k,
        n,
        pairs,
        max_abs: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        corollary_abs: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        corollary_rel: rows
            .iter()
            .map(|r| if r.1 == 0.0 { 0.0 } else { r.1 / r.2 })
            .fold(0.0, f64::max),
    })
}

/// `|d_{n,k} − d_{depth,k}|` for `n = k+1..depth−1`: the tail of the sums
/// `Σ q_i` at the tip, which tend to `d_{*,k}`.
pub fn d_tails(frames: &[FrameDecomposition], k: usize) -> Result<Vec<f64>> {
    let top = frames.iter().map(|f| f.n).max().unwrap_or(0);
    let last = find(frames, k, top)?.d;
    (k + 1..top)
        .map(|n| Ok((find(frames, k, n)?.d - last).abs()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_cubic_fit_is_exact_on_its_span() {
        let ys: Vec<f64> = (0..20).map(|i| -1.0 + 0.1 * i as f64).collect();
        let rs: Vec<f64> = ys.iter().map(|y| 0.3 * y * y - 0.7 * y * y * y).collect();
        let [a, b] = quadratic_cubic_fit(&ys, &rs);
        assert!((a - 0.3).abs() < 1e-12 && (b + 0.7).abs() < 1e-12);
    }

    #[test]
    fn quadratic_cubic_fit_of_nothing_is_zero() {
        assert_eq!(quadratic_cubic_fit(&[0.0, 0.0], &[1.0, 2.0]), [0.0, 0.0]);
    }
}
