//! Placing a two-parameter family on the set of maps that renormalize to a
//! given depth while staying close to the degenerate fixed point.
//!
//! A perturbed seed drifts away from the fixed point along the unstable
//! directions of the renormalization operator: the period-doubling mode and
//! the displacement of the critical point. Both are removed by adding
//! `θ₁ + θ₂ x` to `ε` and solving, at level `N`, for
//!
//! `E₁ = (g(1) + g(−1))/2 − σ★ = 0` and `E₂ = g'(0) = 0`,
//!
//! where `g(x) = π_x F_N(x, 0, 0)` and `σ★ = f★(1)` is the one-dimensional
//! scaling. The solve runs by continuation over `N = 1, 2, …, depth`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmap3::HenonMap3;
use crate::renorm::{RenormCascade, StraighteningSolve};

/// Outcome of a tuning run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tuning {
    pub theta: [f64; 2],
    pub depth: usize,
    /// `(E₁, E₂)` at the returned parameters.
    pub defect: [f64; 2],
    pub newton_steps: usize,
}

/// `(E₁, E₂)` of a map at level `depth`.
pub fn tuning_defect(
    map: HenonMap3,
    depth: usize,
    solve: StraighteningSolve,
    sigma_star: f64,
) -> Result<[f64; 2]> {
    let c = RenormCascade::build(map, depth, solve)?;
    let top = c.level(depth)?;
    let gp = top.value([1.0, 0.0, 0.0])?[0];
    let gm = top.value([-1.0, 0.0, 0.0])?[0];
    let slope = top.jet([0.0, 0.0, 0.0])?.1[0][0];
    Ok([0.5 * (gp + gm) - sigma_star, slope])
}

fn norm(e: &[f64; 2]) -> f64 {
    e[0].abs().max(e[1].abs())
}

fn forward_jacobian(
    defect: &dyn Fn([f64; 2]) -> Result<[f64; 2]>,
    theta: [f64; 2],
    e: [f64; 2],
) -> Result<[[f64; 2]; 2]> {
    let h = 1e-7;
    let mut jac = [[0.0; 2]; 2];
    for j in 0..2 {
        let mut t = theta;
        t[j] += h;
        let et = defect(t)?;
        for i in 0..2 {
            jac[i][j] = (et[i] - e[i]) / h;
        }
    }
    Ok(jac)
}

/// Quasi-Newton continuation on `θ` for the family `θ ↦ build(θ)`: a
/// finite-difference Jacobian at the start of each level, Broyden updates
/// after every accepted step.
pub fn tune_seed(
    build: &dyn Fn([f64; 2]) -> Result<HenonMap3>,
    depth: usize,
    solve: StraighteningSolve,
    sigma_star: f64,
    theta0: [f64; 2],
) -> Result<(HenonMap3, Tuning)> {
    let mut theta = theta0;
    let mut steps = 0;
    let mut e = [0.0; 2];
    for n in 1..=depth {
        let defect = |t: [f64; 2]| tuning_defect(build(t)?, n, solve, sigma_star);
        e = defect(theta)?;
        let mut jac = forward_jacobian(&defect, theta, e)?;
        let mut fresh = true;
        // Intermediate levels only supply a starting point for the next one.
        let target = if n == depth { 1e-13 } else { 1e-9 };
        for _ in 0..16 {
            if norm(&e) <= target {
                break;
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det == 0.0 || !det.is_finite() {
                return Err(Error::Degenerate(format!(
                    "tuning Jacobian singular at level {n}"
                )));
            }
            let step = [
                (jac[1][1] * e[0] - jac[0][1] * e[1]) / det,
                (jac[0][0] * e[1] - jac[1][0] * e[0]) / det,
            ];
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..8 {
                let t = [theta[0] - lambda * step[0], theta[1] - lambda * step[1]];
                if let Ok(et) = defect(t) {
                    if norm(&et) < norm(&e) {
                        accepted = Some((t, et));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            steps += 1;
            match accepted {
                Some((t, et)) => {
                    let s = [t[0] - theta[0], t[1] - theta[1]];
                    let ss = s[0] * s[0] + s[1] * s[1];
                    for i in 0..2 {
                        let js = jac[i][0] * s[0] + jac[i][1] * s[1];
                        let y = et[i] - e[i];
                        for j in 0..2 {
                            jac[i][j] += (y - js) * s[j] / ss;
                        }
                    }
                    theta = t;
                    e = et;
                    fresh = false;
                }
                None if !fresh => {
                    jac = forward_jacobian(&defect, theta, e)?;
                    fresh = true;
                }
                // No decrease along a freshly differenced Newton direction:
                // the defect sits at the evaluation noise floor of this level.
                None => break,
            }
        }
        if norm(&e) > 1e-8 {
            return Err(Error::NotConverged {
                what: "seed tuning",
                iters: steps,
                residual: norm(&e),
            });
        }
    }
    let map = build(theta)?;
    Ok((
        map,
        Tuning {
            theta,
            depth,
            defect: e,
            newton_steps: steps,
        },
    ))
}
