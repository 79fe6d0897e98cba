//! Dyadic words, the canonical boxing `B^n_w = Ψ^n_w(B)`, tips, critical
//! points and averages against the invariant measure of the Cantor attractor.
//!
//! The invariant measure gives weight `2⁻ⁿ` to every piece of level `n`, so
//! its integrals are realized as averages over all `2ⁿ` words evaluated at one
//! base point (the level-`n` tip).

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmap3::DOMAIN_TOL;
use crate::jet::{det3, dist3, solve3, sub3, IDENTITY, M3, P3};
use crate::renorm::{Level, RenormCascade};

/// A letter of a dyadic word: `V ↦ 0`, `C ↦ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Letter {
    V,
    C,
}

impl Letter {
    pub fn bit(self) -> usize {
        match self {
            Letter::V => 0,
            Letter::C => 1,
        }
    }
    pub fn from_bit(b: usize) -> Letter {
        if b & 1 == 0 {
            Letter::V
        } else {
            Letter::C
        }
    }
}

/// A word `w₁ … w_n` with `w₁` the least significant digit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn new(letters: Vec<Letter>) -> Self {
        Word(letters)
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn uniform(letter: Letter, n: usize) -> Self {
        Word(vec![letter; n])
    }

    /// The word of length `n` encoding `index = Σ w_{i+1} 2^i`.
    pub fn from_index(index: usize, n: usize) -> Self {
        Word((0..n).map(|i| Letter::from_bit(index >> i)).collect())
    }

    pub fn index(&self) -> usize {
        self.0.iter().enumerate().map(|(i, l)| l.bit() << i).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letter(&self, i: usize) -> Letter {
        self.0[i]
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    /// `w ν`: appends one letter at the most significant end.
    pub fn child(&self, l: Letter) -> Word {
        let mut v = self.0.clone();
        v.push(l);
        Word(v)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// Base-2 increment with carry, modulo `2ⁿ`.
    pub fn successor(&self) -> Word {
        let mut v = self.0.clone();
        for l in v.iter_mut() {
            match *l {
                Letter::V => {
                    *l = Letter::C;
                    return Word(v);
                }
                Letter::C => *l = Letter::V,
            }
        }
        Word(v)
    }

    /// Parses a string of `v`/`c` characters.
    pub fn parse(s: &str) -> Result<Word> {
        s.chars()
            .map(|ch| match ch {
                'v' | 'V' => Ok(Letter::V),
                'c' | 'C' => Ok(Letter::C),
                _ => Err(Error::InvalidMap(format!(
                    "invalid letter {ch:?} in word {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "-");
        }
        for l in &self.0 {
            write!(f, "{}", if *l == Letter::V { 'v' } else { 'c' })?;
        }
        Ok(())
    }
}

/// Axis-aligned bounding box of a point set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hull {
    pub lo: P3,
    pub hi: P3,
}

impl Hull {
    pub fn of(points: &[P3]) -> Hull {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Hull { lo, hi }
    }

    /// Distance by which `p` lies outside the hull inflated by `pad`.
    pub fn excess(&self, p: &P3, pad: f64) -> f64 {
        (0..3)
            .map(|i| {
                (self.lo[i] - pad - p[i])
                    .max(p[i] - self.hi[i] - pad)
                    .max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// True when the hulls share interior in every coordinate.
    pub fn overlaps(&self, o: &Hull) -> bool {
        (0..3).all(|i| self.lo[i] < o.hi[i] && o.lo[i] < self.hi[i])
    }

    /// Length of the intersection of the projections to axis `i`.
    pub fn axis_overlap(&self, o: &Hull, i: usize) -> f64 {
        (self.hi[i].min(o.hi[i]) - self.lo[i].max(o.lo[i])).max(0.0)
    }

    pub fn extent(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }
}

/// Sampled image of a lattice of `B` under `Ψ^n_w`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PieceSample {
    pub word: Word,
    pub points: Vec<P3>,
    pub hull: Hull,
    pub diameter: f64,
}

impl PieceSample {
    pub fn from_points(word: Word, points: Vec<P3>) -> Self {
        let hull = Hull::of(&points);
        let diameter = diameter(&points);
        PieceSample {
            word,
            points,
            hull,
            diameter,
        }
    }
}

/// Largest pairwise distance.
pub fn diameter(points: &[P3]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max(dist3(a, b));
        }
    }
    d
}

/// `B^n_w` sampled on an `m³` lattice of `B`.
pub fn piece(c: &RenormCascade, w: &Word, lattice: usize) -> Result<PieceSample> {
    piece_from(c, 0, w, lattice)
}

/// `Ψ^{k+|w|}_{k,w}(B)` sampled on an `m³` lattice.
pub fn piece_from(c: &RenormCascade, k: usize, w: &Word, lattice: usize) -> Result<PieceSample> {
    let bx = *c.level(k + w.len())?.bx();
    let pts = bx
        .lattice(lattice)
        .into_par_iter()
        .map(|p| c.psi_word(k, w, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(PieceSample::from_points(w.clone(), pts))
}

/// Relative change of the diameter when the lattice is refined twofold.
pub fn sampling_adequacy(c: &RenormCascade, w: &Word, lattice: usize) -> Result<f64> {
    let a = piece(c, w, lattice)?.diameter;
    let b = piece(c, w, 2 * lattice - 1)?.diameter;
    Ok((b - a).abs() / b.max(1e-300))
}

/// Images `Ψ^n_{k,w}(base)` for all `2^{n−k}` words, indexed by word index.
///
/// Evaluated through the prefix tree: the most significant letter is applied
/// first, so each coordinate change is evaluated once per tree node.
pub fn cantor_points(c: &RenormCascade, k: usize, n: usize, base: P3) -> Result<Vec<P3>> {
    if n > c.depth() || k > n {
        return Err(Error::Index {
            what: "cantor level",
            index: n,
            limit: c.depth(),
        });
    }
    // At step j the vector holds Ψ^n_{j, w_{j+1..n}}(base), indexed by the
    // binary number w_{j+1} … w_n read little-endian.
    let mut pts = vec![base];
    for j in (k + 1..=n).rev() {
        let body = c.body(j)?;
        let next: Vec<[P3; 2]> = pts
            .par_iter()
            .map(|p| {
                let (pv, pc) = body.psi_pair(*p).map_err(|e| e.at_level(j))?;
                Ok([pv, pc])
            })
            .collect::<Result<Vec<_>>>()?;
        // Prepending a letter doubles the index and adds its bit.
        let mut out = vec![[0.0; 3]; 2 * pts.len()];
        for (i, pair) in next.iter().enumerate() {
            out[2 * i] = pair[0];
            out[2 * i + 1] = pair[1];
        }
        pts = out;
    }
    Ok(pts)
}

/// Tips `τ_k`, critical points `c_k` and estimated accuracy per level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TipData {
    pub tau: Vec<P3>,
    pub crit: Vec<P3>,
    /// Distance between the depth-`N` and depth-`(N−1)` estimates.
    pub radius: Vec<f64>,
}

/// Fixed point of `ψ_c` for the renormalization of `map`.
fn psi_c_fixed_point(level: &Level, start: P3) -> Result<P3> {
    let mut w = start;
    for _ in 0..3 {
        w = level.psi_c(w)?;
    }
    let mut prev = f64::INFINITY;
    for it in 0..30 {
        let pj = level.psi_jet(w)?;
        let g = sub3(&pj.c, &w);
        let mut a = pj.dc;
        for (i, row) in a.iter_mut().enumerate() {
            row[i] -= IDENTITY[i][i];
        }
        let step = solve3(&a, &g).ok_or_else(|| Error::Degenerate("ψ_c − id singular".into()))?;
        let next = sub3(&w, &step);
        let moved = dist3(&next, &w);
        w = next;
        if moved <= 1e-15 {
            return Ok(w);
        }
        // Steps that stop shrinking have hit the evaluation noise floor.
        if it >= 3 && moved >= 0.5 * prev {
            if moved <= 1e-7 {
                return Ok(w);
            }
            break;
        }
        prev = moved;
    }
    Err(Error::NotConverged {
        what: "critical point fixed point",
        iters: 30,
        residual: dist3(&level.psi_c(w)?, &w),
    })
}

/// Tips and critical points at every level of the cascade.
///
/// `c_N` is the fixed point of `ψ^{N+1}_c`, `τ_N = F_N(c_N)`, and lower levels
/// follow from `τ_k = Ψ^N_{k,v}(τ_N)` and `c_k = Ψ^N_{k,c}(c_N)`, so that
/// `F_k(c_k) = τ_k` holds at every level up to composition round-off.
pub fn tips(c: &RenormCascade) -> Result<TipData> {
    let n = c.depth();
    let top = c.level(n)?;
    let extra = Level::new(top, c.solve()).map_err(|e| e.at_level(n))?;
    let (tau, crit) = tips_from(c, n, &extra)?;
    let mut radius = vec![0.0; n + 1];
    if n >= 1 {
        let (tau2, _) = tips_from(c, n - 1, c.body(n)?)?;
        for k in 0..n {
            radius[k] = dist3(&tau[k], &tau2[k]);
        }
    }
    // At the top level, use the fixed-point defect of ψ_v.
    radius[n] = dist3(&extra.psi_v(tau[n])?, &tau[n]);
    Ok(TipData { tau, crit, radius })
}

fn tips_from(c: &RenormCascade, n: usize, next: &Level) -> Result<(Vec<P3>, Vec<P3>)> {
    let start = c.level(n)?.bx().center();
    let cn = psi_c_fixed_point(next, start).map_err(|e| e.at_level(n))?;
    let tn = c.level(n)?.value(cn)?;
    let mut tau = vec![[0.0; 3]; n + 1];
    let mut crit = vec![[0.0; 3]; n + 1];
    tau[n] = tn;
    crit[n] = cn;
    for k in (0..n).rev() {
        tau[k] = c.psi(k + 1, Letter::V, tau[k + 1])?;
        crit[k] = c.psi(k + 1, Letter::C, crit[k + 1])?;
    }
    Ok((tau, crit))
}

impl TipData {
    pub fn tip(&self, k: usize) -> Result<P3> {
        self.tau.get(k).copied().ok_or(Error::Index {
            what: "tip level",
            index: k,
            limit: self.tau.len().saturating_sub(1),
        })
    }

    pub fn critical(&self, k: usize) -> Result<P3> {
        self.crit.get(k).copied().ok_or(Error::Index {
            what: "critical point level",
            index: k,
            limit: self.crit.len().saturating_sub(1),
        })
    }
}

/// `τ_k` when at least four levels remain below it.
pub fn tip(c: &RenormCascade, t: &TipData, k: usize) -> Result<P3> {
    if c.depth() < k + 4 {
        return Err(Error::Index {
            what: "tip level (needs depth ≥ k + 4)",
            index: k,
            limit: c.depth().saturating_sub(4),
        });
    }
    t.tip(k)
}

/// Newton solve of `F_k(w) = τ_k` from `start`; `None` when `DF_k` is singular.
pub fn solve_preimage(c: &RenormCascade, k: usize, target: P3, start: P3) -> Result<Option<P3>> {
    let map = c.level(k)?;
    let mut w = start;
    for _ in 0..40 {
        let (v, m) = map.jet(w)?;
        if det3(&m).abs() < 1e-300 {
            return Ok(None);
        }
        let Some(step) = solve3(&m, &sub3(&v, &target)) else {
            return Ok(None);
        };
        let next = sub3(&w, &step);
        let moved = dist3(&next, &w);
        w = next;
        if moved <= 1e-15 {
            break;
        }
    }
    Ok(Some(w))
}

/// Critical point `c_k`, cross-checked against a Newton solve of `F_k(w) = τ_k`
/// when `F_k` is invertible near it. Returns the point and the disagreement.
pub fn critical_point(c: &RenormCascade, t: &TipData, k: usize) -> Result<(P3, Option<f64>)> {
    let ck = t.critical(k)?;
    let tk = t.tip(k)?;
    let newton = solve_preimage(c, k, tk, ck)?;
    let gap = newton.map(|w| dist3(&w, &ck));
    if let Some(g) = gap {
        if g > 1e-7 {
            return Err(Error::Hypothesis(format!(
                "critical point at level {k}: limit and Newton disagree by {g:e}"
            )));
        }
    }
    Ok((ck, gap))
}

/// Worst failure of `F(B^n_w) ⊂ B^n_{w+1}` over all words of length `n`.
///
/// On lattice points `p` of `B`, `F ∘ Ψ^n_w(p) = Ψ^n_{w+1}(p)` unless `w = cⁿ`,
/// where `F ∘ Ψ^n_w = Ψ^n_{vⁿ} ∘ F_n`. The returned violation is the largest of
/// the identity residual and the escape of `F_n(p)` from `B`. The second value
/// is the worst excess of `F(Ψ^n_w(p))` outside the sampled hull of the
/// successor piece inflated by `1e−6`.
pub fn dynamics_check(c: &RenormCascade, n: usize, lattice: usize) -> Result<(f64, f64)> {
    if n > c.depth() {
        return Err(Error::Index {
            what: "dynamics level",
            index: n,
            limit: c.depth(),
        });
    }
    let f0 = c.level(0)?;
    let fnn = c.level(n)?;
    let bx = *fnn.bx();
    let lat = bx.lattice(lattice);
    let words: Vec<Word> = (0..1usize << n).map(|i| Word::from_index(i, n)).collect();
    let results = words
        .par_iter()
        .map(|w| -> Result<(f64, f64)> {
            let succ = w.successor();
            let wrap = succ.index() == 0;
            let succ_piece = piece(c, &succ, lattice)?;
            let mut ident = 0.0f64;
            let mut hull = 0.0f64;
            for p in &lat {
                let img = f0.value(c.psi_word(0, w, *p)?)?;
                let q = if wrap { fnn.value(*p)? } else { *p };
                let esc = (0..3)
                    .map(|i| {
                        (bx.lo[i] - DOMAIN_TOL - q[i])
                            .max(q[i] - bx.hi[i] - DOMAIN_TOL)
                            .max(0.0)
                    })
                    .fold(0.0, f64::max);
                let rhs = c.psi_word(0, &succ, q)?;
                ident = ident.max(dist3(&img, &rhs)).max(esc);
                hull = hull.max(succ_piece.hull.excess(&img, 1e-6));
            }
            Ok((ident, hull))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1))))
}

/// Worst failure of `B^{n+1}_{wν} ⊂ B^n_w`: the escape of `ψ^{n+1}_ν(p)` from
/// `B` over lattice points `p` of `B`, for `n < depth`.
pub fn nesting_check(c: &RenormCascade, n: usize, lattice: usize) -> Result<f64> {
    let body = c.body(n + 1)?;
    let bx = *c.level(n)?.bx();
    let mut worst = 0.0f64;
    for p in c.level(n + 1)?.bx().lattice(lattice) {
        for l in [Letter::V, Letter::C] {
            let q = body.psi(l, p)?;
            for i in 0..3 {
                worst = worst.max(bx.lo[i] - q[i]).max(q[i] - bx.hi[i]);
            }
        }
    }
    Ok(worst.max(0.0))
}

/// Pairs of distinct words of length `n` whose sampled hulls overlap.
pub fn disjointness_check(pieces: &[PieceSample]) -> Vec<(Word, Word)> {
    let mut bad = Vec::new();
    for (i, a) in pieces.iter().enumerate() {
        for b in &pieces[i + 1..] {
            if a.hull.overlaps(&b.hull) {
                bad.push((a.word.clone(), b.word.clone()));
            }
        }
    }
    bad
}

/// `(1/2ⁿ) Σ_w log|g(Ψⁿ_w(base))|` over words of length `n`, with `g`
/// evaluated in level-0 coordinates.
pub fn cantor_log_average(
    c: &RenormCascade,
    field: &(dyn Fn(P3) -> Result<f64> + Sync),
    n: usize,
    base: P3,
) -> Result<f64> {
    let pts = cantor_points(c, 0, n, base)?;
    log_average_over(&pts, field)
}

/// Mean of `log|g|` over the given points; errors name the first bad index.
pub fn log_average_over(pts: &[P3], field: &(dyn Fn(P3) -> Result<f64> + Sync)) -> Result<f64> {
    let logs = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let v = field(*p)?;
            if v == 0.0 || !v.is_finite() {
                return Err(Error::Degenerate(format!(
                    "field value {v} at word index {i} of the Cantor sample"
                )));
            }
            Ok(v.abs().ln())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(logs.iter().sum::<f64>() / logs.len() as f64)
}

/// `b_F = exp ∫ log|det DF| dμ`, estimated from the `2ⁿ` pieces.
pub fn average_jacobian(c: &RenormCascade, tips: &TipData, n: usize) -> Result<f64> {
    let f0 = c.level(0)?.clone();
    let det = move |p: P3| -> Result<f64> {
        let (_, m) = f0.jet(p)?;
        Ok(det3(&m))
    };
    let l = cantor_log_average(c, &det, n, tips.tip(n)?).map_err(|e| match e {
        Error::Degenerate(s) => Error::Degenerate(format!("zero Jacobian: {s}")),
        e => e,
    })?;
    Ok(l.exp())
}

/// Derivative of a word map at a point, exposed for frame computations.
pub fn word_jacobian(c: &RenormCascade, k: usize, w: &Word, p: P3) -> Result<M3> {
    Ok(c.psi_word_jet(k, w, p)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn successor_examples() {
        let vv = Word::parse("vv").unwrap();
        assert_eq!(vv.successor(), Word::parse("cv").unwrap());
        assert_eq!(
            Word::parse("cv").unwrap().successor(),
            Word::parse("vc").unwrap()
        );
        assert_eq!(Word::parse("cc").unwrap().successor(), vv);
    }

    #[test]
    fn index_round_trip() {
        for n in 0..6 {
            for i in 0..1usize << n {
                let w = Word::from_index(i, n);
                assert_eq!(w.index(), i);
                assert_eq!(w.successor().index(), (i + 1) % (1 << n));
            }
        }
    }

    #[test]
    fn hull_geometry() {
        let a = Hull::of(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        let b = Hull::of(&[[2.0, 0.0, 0.0], [3.0, 1.0, 1.0]]);
        assert!(!a.overlaps(&b));
        assert_eq!(a.axis_overlap(&b, 0), 0.0);
        assert_eq!(a.axis_overlap(&a, 0), 1.0);
        assert_eq!(a.excess(&[1.5, 0.5, 0.5], 0.0), 0.5);
        assert!((diameter(&[[0.0; 3], [1.0, 1.0, 1.0]]) - 3f64.sqrt()).abs() < 1e-15);
    }
}
