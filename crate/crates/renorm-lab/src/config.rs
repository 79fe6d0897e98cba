//! Run configuration: the seed map and the numerical settings of a run,
//! read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use renorm_core::field::{Poly1, Poly3, ScalarField1, ScalarField3, Sine1, Sum3};
use renorm_core::hmap3::{make_example_n, shifted, HenonMap3};
use renorm_core::renorm::StraighteningSolve;
use renorm_core::tuning::tune_seed;
use renorm_core::unimodal::UnimodalMap;

use crate::error::{CliError, CliResult};

/// Largest cascade depth accepted from a config file.
pub const MAX_DEPTH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `F = (f★(x), x, 0)`.
    Degenerate,
    /// `F = (f★(x) − ε(x, y), x, b z)`.
    TrivialExtension,
    /// `δ = η(C y − z) + C x`, optionally with an `ε` polynomial.
    ExampleN,
    /// Arbitrary polynomial `ε` and `δ`.
    CustomPolynomial,
}

/// The function `η` of the class-𝒩 example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EtaSpec {
    Sine { amp: f64, freq: f64 },
    Poly { coeffs: Vec<f64> },
}

impl Default for EtaSpec {
    fn default() -> Self {
        EtaSpec::Sine {
            amp: 0.1,
            freq: 1.0,
        }
    }
}

/// Seed map. Polynomial terms are `[coef, i, j, l]` for `coef·xⁱyʲzˡ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub family: Family,
    /// The constant `C` of the class-𝒩 example.
    #[serde(default = "default_c")]
    pub c: f64,
    /// `∂_zδ` of the trivial extension.
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub eta: EtaSpec,
    #[serde(default)]
    pub eps: Vec<[f64; 4]>,
    #[serde(default)]
    pub delta: Vec<[f64; 4]>,
    /// Perturbation budget `ε̄`.
    #[serde(default = "default_eps_bar")]
    pub eps_bar: f64,
    /// Shift `θ₁ + θ₂x` added to `ε`.
    #[serde(default)]
    pub theta: [f64; 2],
    /// Solve for `θ` so that the family renormalizes to `depth`.
    #[serde(default)]
    pub tune: bool,
    /// Coefficient `κ` of a `κ·y` term added to `δ`, which breaks class 𝒩.
    #[serde(default)]
    pub inject_class_n: f64,
}

fn default_c() -> f64 {
    0.02
}
fn default_b() -> f64 {
    0.1
}
fn default_eps_bar() -> f64 {
    0.1
}

/// Residual thresholds of the verification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tol_class_n")]
    pub class_n: f64,
    #[serde(default = "tol_identity")]
    pub identity: f64,
    #[serde(default = "tol_boxing")]
    pub boxing: f64,
    #[serde(default = "tol_d_sum")]
    pub d_sum: f64,
    #[serde(default = "tol_cocycle")]
    pub cocycle: f64,
    #[serde(default = "tol_r_recursion")]
    pub r_recursion: f64,
}

fn tol_class_n() -> f64 {
    1e-8
}
fn tol_identity() -> f64 {
    1e-7
}
fn tol_boxing() -> f64 {
    1e-8
}
fn tol_d_sum() -> f64 {
    1e-6
}
fn tol_cocycle() -> f64 {
    1e-8
}
fn tol_r_recursion() -> f64 {
    1e-9
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            class_n: tol_class_n(),
            identity: tol_identity(),
            boxing: tol_boxing(),
            d_sum: tol_d_sum(),
            cocycle: tol_cocycle(),
            r_recursion: tol_r_recursion(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapSpec,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Points per axis of the sampling lattices.
    #[serde(default = "default_lattice")]
    pub lattice: usize,
    /// Random sample points per identity check.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads; `RENORMLAB_THREADS` takes precedence.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_depth() -> usize {
    5
}
fn default_lattice() -> usize {
    5
}
fn default_points() -> usize {
    100
}
fn default_degree() -> usize {
    14
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_seed() -> u64 {
    7
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return bad(format!("depth {} outside 1..={MAX_DEPTH}", self.depth));
        }
        if self.lattice < 2 {
            return bad(format!("lattice {} must be at least 2", self.lattice));
        }
        if self.points == 0 {
            return bad("points must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        let m = &self.map;
        if !(m.eps_bar > 0.0 && m.eps_bar < 1.0) {
            return bad(format!("eps_bar {} outside (0, 1)", m.eps_bar));
        }
        for (name, terms) in [("eps", &m.eps), ("delta", &m.delta)] {
            for t in terms.iter() {
                if !t.iter().all(|v| v.is_finite())
                    || t[1..].iter().any(|p| *p < 0.0 || p.fract() != 0.0)
                {
                    return bad(format!(
                        "{name} term {t:?} needs finite coef and non-negative integer powers"
                    ));
                }
            }
        }
        let finite = [m.c, m.b, m.theta[0], m.theta[1], m.inject_class_n];
        if !finite.iter().all(|v| v.is_finite()) {
            return bad("map parameters must be finite".into());
        }
        match m.family {
            Family::TrivialExtension if !(m.b.abs() > 0.0 && m.b.abs() <= m.eps_bar) => {
                bad(format!(
                    "trivial-extension b = {} must satisfy 0 < |b| <= eps_bar",
                    m.b
                ))
            }
            Family::CustomPolynomial if m.delta.is_empty() => {
                bad("custom-polynomial needs delta terms".into())
            }
            Family::Degenerate if !(m.eps.is_empty() && m.delta.is_empty()) => {
                bad("degenerate family takes no eps or delta terms".into())
            }
            _ => Ok(()),
        }
    }

    /// True when the seed map has `∂_zδ ≠ 0`, so that the checks built on
    /// inverting `F` apply.
    pub fn is_diffeomorphic(&self) -> bool {
        self.map.family != Family::Degenerate
    }
}

fn poly(terms: &[[f64; 4]]) -> ScalarField3 {
    ScalarField3::new(Poly3::new(
        terms
            .iter()
            .map(|t| Poly3::term(t[0], t[1] as u32, t[2] as u32, t[3] as u32))
            .collect(),
    ))
}

impl MapSpec {
    fn eta_field(&self) -> ScalarField1 {
        match &self.eta {
            EtaSpec::Sine { amp, freq } => ScalarField1::new(Sine1 {
                amp: *amp,
                freq: *freq,
            }),
            EtaSpec::Poly { coeffs } => ScalarField1::new(Poly1 {
                coeffs: coeffs.clone(),
            }),
        }
    }

    fn delta_field(&self) -> ScalarField3 {
        let base = match self.family {
            Family::TrivialExtension => ScalarField3::new(Poly3::linear_z(self.b)),
            _ => poly(&self.delta),
        };
        if self.inject_class_n != 0.0 {
            let fault =
                ScalarField3::new(Poly3::new(vec![Poly3::term(self.inject_class_n, 0, 1, 0)]));
            ScalarField3::new(Sum3(base, fault))
        } else {
            base
        }
    }

    /// The seed map at the shift `θ`.
    pub fn build_at(&self, fstar: &UnimodalMap, theta: [f64; 2]) -> renorm_core::Result<HenonMap3> {
        let eps = shifted(&poly(&self.eps), theta);
        match self.family {
            Family::Degenerate => HenonMap3::degenerate(fstar.clone(), 0.05),
            Family::ExampleN if self.inject_class_n == 0.0 => {
                make_example_n(self.eta_field(), self.c, fstar.clone(), eps, self.eps_bar)
            }
            Family::ExampleN => {
                let clean = make_example_n(
                    self.eta_field(),
                    self.c,
                    fstar.clone(),
                    eps.clone(),
                    self.eps_bar,
                )?;
                let fault =
                    ScalarField3::new(Poly3::new(vec![Poly3::term(self.inject_class_n, 0, 1, 0)]));
                let delta = ScalarField3::new(Sum3(
                    ScalarField3::new(renorm_core::field::ExampleNDelta {
                        eta: self.eta_field(),
                        c: self.c,
                    }),
                    fault,
                ));
                Ok(HenonMap3::new(fstar.clone(), eps, delta, *clean.bx()))
            }
            Family::TrivialExtension | Family::CustomPolynomial => {
                HenonMap3::with_default_box(fstar.clone(), eps, self.delta_field())
            }
        }
    }

    /// Largest `|ε|` (before the shift) and `|δ|` on a lattice of the box.
    pub fn perturbation_size(&self, map: &HenonMap3) -> f64 {
        let eps = poly(&self.eps);
        map.bx()
            .lattice(9)
            .iter()
            .map(|w| {
                let d = match self.family {
                    Family::ExampleN | Family::Degenerate => 0.0,
                    _ => self.delta_field().value(*w).abs(),
                };
                eps.value(*w).abs().max(d)
            })
            .fold(0.0, f64::max)
    }
}

/// Seed map with its shift, after optional tuning.
pub struct Seed {
    pub map: HenonMap3,
    pub theta: [f64; 2],
    pub tuning_steps: Option<usize>,
}

/// Builds the seed map, enforcing the perturbation budget.
pub fn build_seed(cfg: &RunConfig, fstar: &UnimodalMap, sigma_star: f64) -> CliResult<Seed> {
    let spec = &cfg.map;
    let map = spec
        .build_at(fstar, spec.theta)
        .map_err(CliError::from_core)?;
    let size = spec.perturbation_size(&map);
    if size > spec.eps_bar {
        return Err(CliError::Config(format!(
            "perturbation size {size:e} exceeds eps_bar {:e}",
            spec.eps_bar
        )));
    }
    if !spec.tune {
        return Ok(Seed {
            map,
            theta: spec.theta,
            tuning_steps: None,
        });
    }
    let build = |t: [f64; 2]| spec.build_at(fstar, t);
    let (map, tuning) = tune_seed(
        &build,
        cfg.depth,
        StraighteningSolve::default(),
        sigma_star,
        spec.theta,
    )
    .map_err(CliError::from_core)?;
    Ok(Seed {
        map,
        theta: tuning.theta,
        tuning_steps: Some(tuning.newton_steps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
        depth = 4
        seed = 11
        [map]
        family = "example-n"
        c = 0.02
        eta = { kind = "sine", amp = 0.1, freq = 1.0 }
    "#;

    #[test]
    fn parses_example_with_defaults() {
        let cfg = RunConfig::parse(EXAMPLE).unwrap();
        assert_eq!(cfg.map.family, Family::ExampleN);
        assert_eq!(cfg.depth, 4);
        assert_eq!(cfg.lattice, 5);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.tolerances, Tolerances::default());
        assert!(cfg.is_diffeomorphic());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        assert!(
            RunConfig::parse("depth = 3\n[map]\nfamily = \"degenerate\"\nbogus = 1\n").is_err()
        );
        assert!(RunConfig::parse("depth = 0\n[map]\nfamily = \"degenerate\"\n").is_err());
        assert!(RunConfig::parse("depth = 12\n[map]\nfamily = \"degenerate\"\n").is_err());
        assert!(RunConfig::parse("[map]\nfamily = \"trivial-extension\"\nb = 0.5\n").is_err());
        assert!(RunConfig::parse("[map]\nfamily = \"custom-polynomial\"\n").is_err());
        assert!(RunConfig::parse(
            "[map]\nfamily = \"custom-polynomial\"\ndelta = [[0.1, 0, 0, 0.5]]\n"
        )
        .is_err());
        assert!(RunConfig::parse("[map]\nfamily = \"mystery\"\n").is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = RunConfig::parse(
            "[map]\nfamily = \"custom-polynomial\"\neps = [[0.5, 0, 1, 0]]\ndelta = [[0.1, 0, 0, 1]]\n",
        )
        .unwrap();
        let f = UnimodalMap::quadratic(1.4);
        assert!(matches!(
            build_seed(&cfg, &f, -0.4),
            Err(CliError::Config(_))
        ));
    }
}
