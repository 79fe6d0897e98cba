//! Box geometry of the Cantor attractor: diameters and minimal distances of
//! adjacent boxes, horizontal overlap, the `t_{n,k} ≍ b₁^{2ᵏ}` law, the
//! arithmetic unbounded-geometry scan and the Hölder bound.
//!
//! The adjacent boxes at `(k, n)` are `B^{n+1}_{wv}` and `B^{n+1}_{wc}` with
//! `w = vᵏ c v^{n−k−1}`, the images of `B^{n+1}_v` and `B^{n+1}_c` under
//! `Ψᵏ_{0,v} ∘ F_k ∘ Ψⁿ_{k,v}`; since `F_k ∘ Ψⁿ_{k,vⁿ⁻ᵏ} = Ψⁿ_{k,cvⁿ⁻ᵏ⁻¹}`
//! they are ordinary pieces of the boxing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::{Hull, Letter, PieceSample, TipData, Word};
use crate::error::{Error, Result};
use crate::jet::{dist3, P3};
use crate::renorm::RenormCascade;
use crate::tipframe::FrameDecomposition;
use crate::universal::line_fit;

/// Lattice size per axis for the sampled boxes.
pub const SCAN_LATTICE: usize = 5;

/// Points per axis in the local refinement around the closest pair, which
/// covers one lattice cell at half the lattice spacing.
pub const REFINE_LATTICE: usize = 3;

/// Largest relative change of `dist_min` accepted from the refinement pass.
pub const REFINE_TOLERANCE: f64 = 0.1;

/// Width of the intersection of the `π_x`-hulls; the pieces overlap
/// horizontally when it is positive (at least two common points).
pub fn horizontal_overlap(a: &PieceSample, b: &PieceSample) -> (bool, f64) {
    let w = a.hull.axis_overlap(&b.hull, 0);
    (w > 0.0, w)
}

/// `2ᵏ log b₁ − (n − k) log|σ|`, the log of `b₁^{2ᵏ}/σ^{n−k}`.
fn log_gap(b1: f64, sigma: f64, k: usize, m: usize) -> f64 {
    2f64.powi(k as i32) * b1.ln() - m as f64 * sigma.abs().ln()
}

/// For each `k ≤ kmax`, the `n > k` minimizing `|2ᵏ log b₁ − (n−k) log|σ||`
/// and that gap.
pub fn unbounded_geometry_criterion(
    b1: f64,
    sigma: f64,
    kmax: usize,
) -> Result<Vec<(usize, usize, f64)>> {
    if !(b1 > 0.0 && b1 < 1.0) {
        return Err(Error::Hypothesis(format!("b1 = {b1} outside (0, 1)")));
    }
    if !(sigma > -1.0 && sigma < 0.0) {
        return Err(Error::Hypothesis(format!(
            "sigma = {sigma} outside (-1, 0)"
        )));
    }
    Ok((0..=kmax)
        .map(|k| {
            let target = 2f64.powi(k as i32) * b1.ln() / sigma.abs().ln();
            let m = (target.round() as usize).max(1);
            (k, k + m, log_gap(b1, sigma, k, m).abs())
        })
        .collect())
}

/// `½(1 + log b₁ / log b̃₁)`, an upper bound for the Hölder exponent of a
/// conjugacy between maps with `b₁ > b̃₁`.
pub fn holder_bound(b1: f64, b1_tilde: f64) -> Result<f64> {
    if !(b1_tilde > 0.0 && b1_tilde < b1 && b1 < 1.0) {
        return Err(Error::Hypothesis(format!(
            "need 0 < b1_tilde < b1 < 1, got b1 = {b1}, b1_tilde = {b1_tilde}"
        )));
    }
    Ok(0.5 * (1.0 + b1.ln() / b1_tilde.ln()))
}

/// The `A` threshold of the `t_{n,k} ≍ b₁^{2ᵏ}` law, with unit constant:
/// `0` when `b₁ ≥ ε̄²`, else `⌈log₂(log b₁ / log ε̄ − 1)⌉`.
pub fn t_threshold(b1: f64, eps_bar: f64) -> usize {
    if b1 >= eps_bar * eps_bar {
        0
    } else {
        (b1.ln() / eps_bar.ln() - 1.0).log2().ceil().max(0.0) as usize
    }
}

/// One `(k, n)` entry of [`t_vs_b1`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TRow {
    pub k: usize,
    pub n: usize,
    pub t: f64,
    /// `log|t_{n,k}|/2ᵏ − log b₁`.
    pub log_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TLaw {
    pub threshold: usize,
    pub rows: Vec<TRow>,
    /// Slope of `log|t_{depth,k}|` against `2ᵏ` over the given `k` range,
    /// to be compared with `log b₁`.
    pub slope: Option<f64>,
    pub log_b1: f64,
    /// `max − min` of the residuals at each `k`, in increasing `k`.
    pub spread: Vec<(usize, f64)>,
    /// True when the per-`k` spread fails to shrink from the first to the
    /// last `k`.
    pub spread_not_shrinking: bool,
}

impl TLaw {
    pub fn slope_rel(&self) -> Option<f64> {
        self.slope
            .map(|s| (s - self.log_b1).abs() / self.log_b1.abs())
    }
}

/// `log|t_{n,k}|/2ᵏ − log b₁` for the admissible pairs `n > k + A`, and the
/// slope over `k ∈ ks` at the top level.
pub fn t_vs_b1(
    frames: &[FrameDecomposition],
    b1: f64,
    eps_bar: f64,
    ks: std::ops::RangeInclusive<usize>,
) -> Result<TLaw> {
    if !(b1 > 0.0 && b1 < 1.0) {
        return Err(Error::Hypothesis(format!("b1 = {b1} outside (0, 1)")));
    }
    let threshold = t_threshold(b1, eps_bar);
    let top = frames.iter().map(|f| f.n).max().unwrap_or(0);
    let mut rows: Vec<TRow> = frames
        .iter()
        .filter(|f| f.n > f.k + threshold && f.t != 0.0)
        .map(|f| TRow {
            k: f.k,
            n: f.n,
            t: f.t,
            log_residual: f.t.abs().ln() / 2f64.powi(f.k as i32) - b1.ln(),
        })
        .collect();
    rows.sort_by_key(|r| (r.k, r.n));
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.n == top && ks.contains(&r.k))
        .map(|r| (2f64.powi(r.k as i32), r.t.abs().ln()))
        .unzip();
    let mut spread = Vec::new();
    let mut k_values: Vec<usize> = rows.iter().map(|r| r.k).collect();
    k_values.dedup();
    for k in k_values {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.k == k)
            .map(|r| r.log_residual)
            .collect();
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        spread.push((k, (hi - lo).abs().max(v[0].abs())));
    }
    let spread_not_shrinking = match (spread.first(), spread.last()) {
        (Some(a), Some(b)) if spread.len() > 1 => b.1 >= a.1,
        _ => false,
    };
    Ok(TLaw {
        threshold,
        rows,
        slope: line_fit(&xs, &ys).map(|l| l.0),
        log_b1: b1.ln(),
        spread,
        spread_not_shrinking,
    })
}

/// Closest pair between two sampled boxes.
#[derive(Clone, Copy, Debug)]
struct ClosestPair {
    dist: f64,
    a: usize,
    b: usize,
}

fn closest_pair(a: &[P3], b: &[P3]) -> ClosestPair {
    a.par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (j, d) = b.iter().enumerate().map(|(j, q)| (j, dist3(p, q))).fold(
                (0, f64::INFINITY),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            );
            ClosestPair {
                dist: d,
                a: i,
                b: j,
            }
        })
        .reduce(
            || ClosestPair {
                dist: f64::INFINITY,
                a: 0,
                b: 0,
            },
            |x, y| if y.dist < x.dist { y } else { x },
        )
}

/// `m³` lattice of the cell of half-side `h` centred at `p`, clipped to
/// `[lo, hi]`.
fn local_lattice(p: P3, h: P3, lo: P3, hi: P3, m: usize) -> Vec<P3> {
    let coord = |i: usize, s: usize| {
        let a = (p[i] - h[i]).max(lo[i]);
        let b = (p[i] + h[i]).min(hi[i]);
        a + (b - a) * s as f64 / (m - 1) as f64
    };
    let mut out = Vec::with_capacity(m * m * m);
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                out.push([coord(0, a), coord(1, b), coord(2, c)]);
            }
        }
    }
    out
}

fn map_letter(c: &RenormCascade, j: usize, l: Letter, pts: &[P3]) -> Result<Vec<P3>> {
    pts.par_iter().map(|p| c.psi(j, l, *p)).collect()
}

fn map_word(c: &RenormCascade, w: &Word, pts: Vec<P3>) -> Result<Vec<P3>> {
    pts.into_par_iter().map(|p| c.psi_word(0, w, p)).collect()
}

/// Minimal distance between `Ψ_{0,a}(B)` and `Ψ_{0,b}(B)` sampled on the
/// `lattice` points of `B`, with one refinement pass on a finer local lattice
/// around the closest pair. Returns the refined distance and the relative
/// change made by the refinement.
fn refined_distance(
    c: &RenormCascade,
    (wa, pa): (&Word, &[P3]),
    (wb, pb): (&Word, &[P3]),
    lattice: &[P3],
    cell: P3,
) -> Result<(f64, f64)> {
    let coarse = closest_pair(pa, pb);
    let bx = *c.level(wa.len())?.bx();
    let h: P3 = std::array::from_fn(|i| 0.5 * cell[i]);
    let fa = map_word(
        c,
        wa,
        local_lattice(lattice[coarse.a], h, bx.lo, bx.hi, REFINE_LATTICE),
    )?;
    let fb = map_word(
        c,
        wb,
        local_lattice(lattice[coarse.b], h, bx.lo, bx.hi, REFINE_LATTICE),
    )?;
    let fine = closest_pair(&fa, &fb).dist.min(coarse.dist);
    let change = if coarse.dist > 0.0 {
        (coarse.dist - fine) / coarse.dist
    } else {
        0.0
    };
    Ok((fine, change))
}

/// [`refined_distance`] between two sampled pieces on the standard lattice.
pub fn dist_min(
    c: &RenormCascade,
    a: &PieceSample,
    b: &PieceSample,
    lattice: usize,
) -> Result<(f64, f64)> {
    let bx = *c.level(a.word.len())?.bx();
    let cell: P3 = std::array::from_fn(|i| (bx.hi[i] - bx.lo[i]) / (lattice - 1) as f64);
    refined_distance(
        c,
        (&a.word, &a.points),
        (&b.word, &b.points),
        &bx.lattice(lattice),
        cell,
    )
}

/// The scan word `w = vᵏ c v^{n−k−1}`.
pub fn scan_word(k: usize, n: usize) -> Word {
    let mut letters = vec![Letter::V; k];
    letters.push(Letter::C);
    letters.extend(std::iter::repeat_n(Letter::V, n - k - 1));
    Word::new(letters)
}

/// One `(k, n)` entry of the scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryRow {
    pub k: usize,
    pub n: usize,
    /// The scan word `w`, little-endian.
    pub word: String,
    pub diam_wv: f64,
    pub diam_wc: f64,
    pub dist_min: f64,
    /// Relative change of `dist_min` under refinement.
    pub refinement_change: f64,
    /// Diameter of the hull of both boxes.
    pub diam_union: f64,
    /// Horizontal overlap of `Ψⁿ_{k,v}(B^{n+1}_v)` and `Ψⁿ_{k,v}(B^{n+1}_c)`.
    pub overlap: bool,
    pub overlap_width: f64,
    /// `dist_min / diam(B^{n+1}_{wv})`.
    pub ratio: f64,
    /// `ratio / |σ|ᵏ`.
    pub ratio_over_sigma_k: f64,
    pub t_nk: f64,
    /// `2ᵏ log b₁`.
    pub log_b1_term: f64,
    /// `|2ᵏ log b₁ − (n−k) log|σ||`.
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryReport {
    pub sigma: f64,
    pub b1: f64,
    pub rows: Vec<GeometryRow>,
    /// Per `k`, the row with the smallest gap.
    pub targets: Vec<(usize, usize)>,
    /// Slope of `log ratio` against `k` over the target rows.
    pub ratio_slope: Option<f64>,
}

impl GeometryReport {
    pub fn target_rows(&self) -> Vec<&GeometryRow> {
        self.targets
            .iter()
            .filter_map(|(k, n)| self.rows.iter().find(|r| r.k == *k && r.n == *n))
            .collect()
    }
}

fn mean_abs_sigma(c: &RenormCascade) -> f64 {
    let s = c.sigmas();
    (s.iter().map(|x| x.abs().ln()).sum::<f64>() / s.len() as f64).exp()
}

/// Diameters, minimal distances and overlap for `1 ≤ k ≤ kmax`, `k < n < depth`.
pub fn geometry_scan(
    c: &RenormCascade,
    _tips: &TipData,
    frames: &[FrameDecomposition],
    kmax: usize,
    b1: f64,
) -> Result<GeometryReport> {
    if c.depth() < kmax + 3 {
        return Err(Error::Index {
            what: "geometry kmax (needs depth ≥ kmax + 3)",
            index: kmax,
            limit: c.depth().saturating_sub(3),
        });
    }
    let sigma = mean_abs_sigma(c);
    let mut rows = Vec::new();
    for n in 2..c.depth() {
        let bx = *c.level(n + 1)?.bx();
        let lattice = bx.lattice(SCAN_LATTICE);
        let cell: P3 = std::array::from_fn(|i| (bx.hi[i] - bx.lo[i]) / (SCAN_LATTICE - 1) as f64);
        // inner[ν] holds Ψ^n_{j,v}(ψ^{n+1}_ν(p)) for decreasing j.
        let mut inner = [
            map_letter(c, n + 1, Letter::V, &lattice)?,
            map_letter(c, n + 1, Letter::C, &lattice)?,
        ];
        for k in (1..n).rev() {
            if k + 1 < n {
                // Now Ψ^n_{k+1,v}(ψ^{n+1}_ν(p)).
                for part in inner.iter_mut() {
                    *part = map_letter(c, k + 2, Letter::V, part)?;
                }
            }
            if k > kmax {
                continue;
            }
            let level_k = |l: Letter, pts: &[P3]| map_letter(c, k + 1, l, pts);
            let ov = [
                level_k(Letter::V, &inner[0])?,
                level_k(Letter::V, &inner[1])?,
            ];
            let to_zero = |pts: Vec<P3>| -> Result<Vec<P3>> {
                let vk = Word::uniform(Letter::V, k);
                pts.into_par_iter().map(|p| c.psi_word(0, &vk, p)).collect()
            };
            let bv = to_zero(level_k(Letter::C, &inner[0])?)?;
            let bc = to_zero(level_k(Letter::C, &inner[1])?)?;
            let w = scan_word(k, n);
            let (wv, wc) = (w.child(Letter::V), w.child(Letter::C));
            let (d, change) = refined_distance(c, (&wv, &bv), (&wc, &bc), &lattice, cell)?;
            if change > REFINE_TOLERANCE {
                return Err(Error::NotConverged {
                    what: "minimal-distance sampling",
                    iters: 1,
                    residual: change,
                });
            }
            let a = PieceSample::from_points(wv, bv);
            let b = PieceSample::from_points(wc, bc);
            let mut both = a.points.clone();
            both.extend_from_slice(&b.points);
            let hull = Hull::of(&both);
            let vv = Word::uniform(Letter::V, n - k);
            let [ov_v, ov_c] = ov;
            let pv = PieceSample::from_points(vv.child(Letter::V), ov_v);
            let pc = PieceSample::from_points(vv.child(Letter::C), ov_c);
            let (overlap, overlap_width) = horizontal_overlap(&pv, &pc);
            let t_nk = frames
                .iter()
                .find(|f| f.k == k && f.n == n)
                .map_or(f64::NAN, |f| f.t);
            let ratio = d / a.diameter;
            rows.push(GeometryRow {
                k,
                n,
                word: w.to_string(),
                diam_wv: a.diameter,
                diam_wc: b.diameter,
                dist_min: d,
                refinement_change: change,
                diam_union: dist3(&hull.lo, &hull.hi),
                overlap,
                overlap_width,
                ratio,
                ratio_over_sigma_k: ratio / sigma.powi(k as i32),
                t_nk,
                log_b1_term: 2f64.powi(k as i32) * b1.ln(),
                gap: log_gap(b1, sigma, k, n - k).abs(),
            });
        }
    }
    rows.sort_by_key(|r| (r.k, r.n));
    let mut targets = Vec::new();
    for k in 1..=kmax {
        if let Some(r) = rows
            .iter()
            .filter(|r| r.k == k)
            .min_by(|x, y| x.gap.total_cmp(&y.gap))
        {
            targets.push((r.k, r.n));
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = targets
        .iter()
        .filter_map(|(k, n)| rows.iter().find(|r| r.k == *k && r.n == *n))
        .filter(|r| r.ratio > 0.0)
        .map(|r| (r.k as f64, r.ratio.ln()))
        .unzip();
    Ok(GeometryReport {
        sigma,
        b1,
        ratio_slope: line_fit(&xs, &ys).map(|l| l.0),
        rows,
        targets,
    })
}

/// Constants bracketing the measured diameters between the lower shape
/// `|σᵏσ^{2(n−k)} − σᵏσ^{n−k}b₁^{2ᵏ}|` and the upper shape
/// `σᵏσ^{2(n−k)} + σᵏσ^{n−k}b₁^{2ᵏ}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiameterFit {
    /// `max diam / upper shape`.
    pub c_upper: f64,
    /// `min diam / lower shape`.
    pub c_lower: f64,
    /// `max / min` of `diam / upper shape` over the scanned pairs.
    pub upper_spread: f64,
    /// Pairs whose diameter exceeds `c_upper` times the upper shape or falls
    /// below `c_lower` times the lower shape.
    pub violations: Vec<(usize, usize)>,
    /// `max / min` of `diam / (σᵏσ^{n−k}b₁^{2ᵏ})` over pairs with
    /// `σ^{n−k} < 0.1 b₁^{2ᵏ}`; `None` when there are none.
    pub b1_term_spread: Option<f64>,
}

pub fn diameter_bounds_check(report: &GeometryReport) -> DiameterFit {
    let ls = report.sigma.ln();
    let lb = report.b1.ln();
    let mut up = Vec::new();
    let mut low = Vec::new();
    let mut b1_dom = Vec::new();
    for r in &report.rows {
        let (k, m) = (r.k as f64, (r.n - r.k) as f64);
        let flat = (k * ls + 2.0 * m * ls).exp();
        let bent = (k * ls + m * ls + 2f64.powf(k) * lb).exp();
        up.push(r.diam_wv / (flat + bent));
        low.push(r.diam_wv / (flat - bent).abs());
        if m * ls < 0.1f64.ln() + 2f64.powf(k) * lb {
            b1_dom.push(r.diam_wv / bent);
        }
    }
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_upper = max(&up);
    let c_lower = min(&low);
    let violations = report
        .rows
        .iter()
        .zip(up.iter().zip(&low))
        .filter(|(_, (u, l))| **u > c_upper || **l < c_lower)
        .map(|(r, _)| (r.k, r.n))
        .collect();
    DiameterFit {
        c_upper,
        c_lower,
        upper_spread: c_upper / min(&up),
        violations,
        b1_term_spread: if b1_dom.is_empty() {
            None
        } else {
            Some(max(&b1_dom) / min(&b1_dom))
        },
    }
}
