//! The subcommands. Each builds what it needs from a [`RunConfig`], writes
//! its files into the output directory and returns the report it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use renorm_core::cantor::{
    disjointness_check, dynamics_check, nesting_check, piece, tips, TipData, Word,
};
use renorm_core::geometry::{
    diameter_bounds_check, geometry_scan, holder_bound, t_vs_b1, unbounded_geometry_criterion,
    GeometryReport,
};
use renorm_core::renorm::{RenormCascade, StraighteningSolve};
use renorm_core::tipframe::{
    all_frames, check_cocycle, check_dut_recursions, check_r_recursion, check_z_difference,
    reassembly_check, FrameDecomposition, FrameRow,
};
use renorm_core::unimodal::{solve_fixed_point, FixedPointResult};
use renorm_core::universal::{
    check_ddelta_recursion, check_dx_delta_sum, check_dy_delta_relation, check_jac_recursion,
    class_n_invariance, estimate_b2, universal_numbers,
};

use crate::config::{build_seed, RunConfig};
use crate::error::{CliError, CliResult};

/// Version of every JSON document written by this crate.
pub const SCHEMA: u32 = 1;

/// Tolerance of the one-dimensional fixed-point solve behind every command.
pub const FIXED_POINT_TOL: f64 = 1e-10;

fn core<T>(r: renorm_core::Result<T>) -> CliResult<T> {
    r.map_err(CliError::from_core)
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> CliResult<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    Ok(path)
}

/// Runs `f` on a pool sized by `RENORMLAB_THREADS`, else by `workers`, else
/// by the default of the host.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let from_env = match std::env::var("RENORMLAB_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "RENORMLAB_THREADS = {v:?} is not a positive integer"
                    ))
                })?,
        ),
        Err(_) => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = from_env.or(workers) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointReport {
    pub schema: u32,
    pub degree: usize,
    pub tol: f64,
    pub coeffs: Vec<f64>,
    pub sigma: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub fn cmd_fixedpoint(degree: usize, tol: f64) -> CliResult<FixedPointReport> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::Config(format!("tol = {tol} must be positive")));
    }
    let fp = core(solve_fixed_point(degree, tol))?;
    Ok(FixedPointReport {
        schema: SCHEMA,
        degree,
        tol,
        coeffs: fp.fstar.coeffs().to_vec(),
        sigma: fp.sigma,
        residual: fp.residual,
        iterations: fp.iterations,
    })
}

/// Everything downstream of the config: the fixed point, the seed map and its
/// cascade, and the tips when the map is a diffeomorphism.
pub struct Session {
    pub cfg: RunConfig,
    pub fixed_point: FixedPointResult,
    pub theta: [f64; 2],
    pub tuning_steps: Option<usize>,
    pub cascade: RenormCascade,
    pub tips: Option<TipData>,
}

impl Session {
    pub fn open(cfg: &RunConfig, with_tips: bool) -> CliResult<Self> {
        let fixed_point = core(solve_fixed_point(cfg.degree, FIXED_POINT_TOL))?;
        let seed = build_seed(cfg, &fixed_point.fstar, fixed_point.sigma)?;
        let cascade = core(RenormCascade::build(
            seed.map,
            cfg.depth,
            StraighteningSolve::default(),
        ))?;
        let tips = if with_tips && cfg.is_diffeomorphic() {
            Some(core(tips(&cascade))?)
        } else {
            None
        };
        Ok(Session {
            cfg: cfg.clone(),
            fixed_point,
            theta: seed.theta,
            tuning_steps: seed.tuning_steps,
            cascade,
            tips,
        })
    }

    fn tips(&self) -> CliResult<&TipData> {
        self.tips
            .as_ref()
            .ok_or_else(|| CliError::Config("tips need a diffeomorphic seed map".into()))
    }

    fn frames(&self) -> CliResult<Vec<FrameDecomposition>> {
        core(all_frames(&self.cascade, self.tips()?))
    }

    /// Fields shared by every JSON document of a run.
    fn header(&self, command: &str) -> Value {
        json!({
            "schema": SCHEMA,
            "command": command,
            "family": self.cfg.map.family,
            "depth": self.cfg.depth,
            "seed": self.cfg.seed,
            "theta": self.theta,
            "tuning_steps": self.tuning_steps,
            "sigma_star": self.fixed_point.sigma,
            "sigmas": self.cascade.sigmas(),
        })
    }
}

fn merge(mut header: Value, body: Value) -> Value {
    if let (Value::Object(h), Value::Object(b)) = (&mut header, body) {
        h.extend(b);
    }
    header
}

/// Writes `cascade.json` and `frames.csv`.
pub fn cmd_cascade(cfg: &RunConfig) -> CliResult<Value> {
    let s = Session::open(cfg, true)?;
    let c = &s.cascade;
    let levels: Vec<Value> = (0..=c.depth())
        .map(|k| -> CliResult<Value> {
            let m = core(c.level(k))?;
            Ok(json!({"k": k, "f": m.f().coeffs(), "box_half_height": m.bx().half_height()}))
        })
        .collect::<CliResult<_>>()?;
    let mut body = json!({ "levels": levels });
    if let Some(t) = &s.tips {
        let rows: Vec<FrameRow> = s
            .frames()?
            .iter()
            .map(|f| core(f.row(c)))
            .collect::<CliResult<_>>()?;
        write_csv(&cfg.output, "frames.csv", &rows)?;
        body["tips"] = json!(t);
        body["frame_rows"] = json!(rows.len());
    }
    let report = merge(s.header("cascade"), body);
    write_file(&cfg.output, "cascade.json", &to_json(&report)?)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: Value,
}

impl Check {
    fn measured(name: &str, value: f64, threshold: f64, detail: Value) -> Self {
        Check {
            name: name.to_string(),
            status: if value <= threshold {
                Status::Pass
            } else {
                Status::Fail
            },
            value: Some(value),
            threshold: Some(threshold),
            detail,
        }
    }

    fn skipped(name: &str, why: &str) -> Self {
        Check {
            name: name.to_string(),
            status: Status::NotApplicable,
            value: None,
            threshold: None,
            detail: json!(why),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    #[serde(flatten)]
    pub header: Value,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

const NEEDS_DIFFEO: &str = "needs a diffeomorphic seed map";

fn diffeo_checks(s: &Session, checks: &mut Vec<Check>) -> CliResult<()> {
    let cfg = &s.cfg;
    let c = &s.cascade;
    let tol = &cfg.tolerances;
    let depth = cfg.depth;
    let tips = s.tips()?;

    let cn = core(class_n_invariance(c, cfg.lattice))?;
    checks.push(Check::measured(
        "class_n_invariance",
        cn.max_abs(),
        tol.class_n,
        json!(cn),
    ));

    let dd = (1..=depth.min(3))
        .map(|k| core(check_ddelta_recursion(c, k, cfg.points, cfg.seed)))
        .collect::<CliResult<Vec<_>>>()?;
    checks.push(Check::measured(
        "ddelta_recursion",
        max_of(dd.iter().map(|r| r.max_rel())),
        tol.identity,
        json!(dd),
    ));

    let jac = (1..=depth.min(3))
        .map(|n| core(check_jac_recursion(c, n, cfg.points, cfg.seed)))
        .collect::<CliResult<Vec<_>>>()?;
    checks.push(Check::measured(
        "jacobian_recursion",
        max_of(jac.iter().map(|r| r.max_rel)),
        tol.identity,
        json!(jac),
    ));

    let b2 = core(estimate_b2(c, tips, depth.min(5)))?;
    checks.push(Check::measured(
        "b2_product_formula",
        max_of(b2.rows.iter().map(|r| r.product_rel)),
        tol.identity,
        json!(b2),
    ));

    if depth < 2 {
        for name in [
            "dx_delta_sum",
            "dy_delta_relation",
            "frame_cocycle",
            "frame_d_sum",
        ] {
            checks.push(Check::skipped(name, "needs depth >= 2"));
        }
        return Ok(());
    }
    let n = depth.min(4);
    let dx = core(check_dx_delta_sum(c, tips, 1, n, cfg.points, cfg.seed))?;
    checks.push(Check::measured(
        "dx_delta_sum",
        dx.max_rel,
        tol.identity,
        json!(dx),
    ));
    let dy = core(check_dy_delta_relation(c, 1, n, cfg.points, cfg.seed))?;
    checks.push(Check::measured(
        "dy_delta_relation",
        dy.max_rel,
        tol.identity,
        json!(dy),
    ));

    let frames = s.frames()?;
    let co = core(check_cocycle(&frames))?;
    let co_detail = json!({"triples": co.len()});
    checks.push(Check::measured(
        "frame_cocycle",
        max_of(co.iter().map(|r| r.max_abs)),
        tol.cocycle,
        co_detail,
    ));
    let dut = core(check_dut_recursions(&frames))?;
    checks.push(Check::measured(
        "frame_d_sum",
        dut.max_d_rel(),
        tol.d_sum,
        json!(dut),
    ));
    checks.push(Check::measured(
        "frame_t_u_recursions",
        dut.max_rel(),
        tol.d_sum,
        json!({"rows": dut.rows.len()}),
    ));
    if let Some(top) = frames.iter().find(|f| f.k == 0 && f.n == depth) {
        let re = core(reassembly_check(c, top, cfg.lattice))?;
        checks.push(Check::measured(
            "frame_reassembly",
            re.max_abs,
            tol.identity,
            json!(re),
        ));
    }
    if depth >= 3 {
        let r = (0..=depth - 3)
            .map(|k| core(check_r_recursion(c, tips, k)))
            .collect::<CliResult<Vec<_>>>()?;
        checks.push(Check::measured(
            "r_recursion",
            max_of(r.iter().map(|x| x.max_recursion_abs())),
            tol.r_recursion,
            json!(r),
        ));
        let z = core(check_z_difference(
            c,
            tips,
            1,
            depth,
            cfg.points.min(20),
            cfg.seed,
        ))?;
        checks.push(Check::measured(
            "z_difference",
            z.corollary_rel,
            tol.identity,
            json!(z),
        ));
    } else {
        checks.push(Check::skipped("r_recursion", "needs depth >= 3"));
        checks.push(Check::skipped("z_difference", "needs depth >= 3"));
    }
    Ok(())
}

fn boxing_checks(s: &Session, checks: &mut Vec<Check>) -> CliResult<()> {
    let cfg = &s.cfg;
    let c = &s.cascade;
    let top = cfg.depth.min(5);
    let mut dynamics = Vec::new();
    let mut nesting = Vec::new();
    let mut overlaps = Vec::new();
    for n in 1..=top {
        let (ident, hull) = core(dynamics_check(c, n, cfg.lattice))?;
        dynamics.push(json!({"n": n, "identity": ident, "hull_excess": hull}));
        let pieces = (0..1usize << n)
            .map(|i| core(piece(c, &Word::from_index(i, n), cfg.lattice)))
            .collect::<CliResult<Vec<_>>>()?;
        let bad: Vec<String> = disjointness_check(&pieces)
            .iter()
            .map(|(a, b)| format!("{a}/{b}"))
            .collect();
        overlaps.push(json!({"n": n, "overlapping": bad}));
    }
    for n in 0..top.min(cfg.depth) {
        nesting.push((n, core(nesting_check(c, n, cfg.lattice))?));
    }
    let worst_dyn = max_of(
        dynamics
            .iter()
            .map(|d| d["identity"].as_f64().unwrap_or(f64::INFINITY)),
    );
    checks.push(Check::measured(
        "boxing_dynamics",
        worst_dyn,
        cfg.tolerances.boxing,
        json!(dynamics),
    ));
    checks.push(Check::measured(
        "boxing_nesting",
        max_of(nesting.iter().map(|x| x.1)),
        cfg.tolerances.boxing,
        json!(nesting),
    ));
    let count = overlaps
        .iter()
        .map(|o| o["overlapping"].as_array().map_or(0, |a| a.len()))
        .sum::<usize>();
    checks.push(Check::measured(
        "boxing_disjointness",
        count as f64,
        0.0,
        json!(overlaps),
    ));
    Ok(())
}

/// Runs every identity check and writes `verify.json`. The report is
/// returned whether or not the checks pass.
pub fn cmd_verify(cfg: &RunConfig) -> CliResult<VerifyReport> {
    let s = Session::open(cfg, true)?;
    let mut checks = vec![Check::measured(
        "fixed_point_residual",
        s.fixed_point.residual,
        FIXED_POINT_TOL,
        json!({"degree": cfg.degree}),
    )];
    if cfg.is_diffeomorphic() {
        diffeo_checks(&s, &mut checks)?;
    } else {
        for name in [
            "class_n_invariance",
            "ddelta_recursion",
            "jacobian_recursion",
            "b2_product_formula",
            "dx_delta_sum",
            "dy_delta_relation",
            "frame_cocycle",
            "frame_d_sum",
            "frame_t_u_recursions",
            "frame_reassembly",
            "r_recursion",
            "z_difference",
        ] {
            checks.push(Check::skipped(name, NEEDS_DIFFEO));
        }
    }
    boxing_checks(&s, &mut checks)?;
    let passed = checks.iter().all(|c| c.status != Status::Fail);
    let report = VerifyReport {
        header: s.header("verify"),
        checks,
        passed,
    };
    write_file(&cfg.output, "verify.json", &to_json(&report)?)?;
    Ok(report)
}

/// Writes `universal.json` with `b₂`, `b₁`, `b_F`, the rate fit and `a(x)`.
pub fn cmd_universal(cfg: &RunConfig) -> CliResult<Value> {
    if !cfg.is_diffeomorphic() {
        return Err(CliError::Config(format!(
            "universal numbers {NEEDS_DIFFEO}"
        )));
    }
    let s = Session::open(cfg, true)?;
    let n_a = cfg.depth.saturating_sub(1).max(1);
    let (u, b2, b1) = core(universal_numbers(
        &s.cascade,
        s.tips()?,
        cfg.depth,
        n_a,
        cfg.seed,
    ))?;
    let body = json!({
        "b2": u.b2,
        "b1": u.b1,
        "b_f": u.b_f,
        "b1_b2_minus_b_f": u.b1 * u.b2 - u.b_f,
        "rho_fit": u.rho_fit,
        "rho_in_unit_interval": u.rho_fit.map(|r| r > 0.0 && r < 1.0),
        "a_level": n_a,
        "a_samples": u.a_samples,
        "b2_estimate": b2,
        "b1_estimate": b1,
    });
    let report = merge(s.header("universal"), body);
    write_file(&cfg.output, "universal.json", &to_json(&report)?)?;
    Ok(report)
}

/// Writes `geometry.csv` and `summary.json` for the scan up to `kmax`.
pub fn cmd_geometry(cfg: &RunConfig, kmax: usize) -> CliResult<(GeometryReport, Value)> {
    if !cfg.is_diffeomorphic() {
        return Err(CliError::Config(format!(
            "the geometry scan {NEEDS_DIFFEO}"
        )));
    }
    let s = Session::open(cfg, true)?;
    let tips = s.tips()?;
    let frames = s.frames()?;
    let b2 = core(estimate_b2(&s.cascade, tips, cfg.depth))?;
    let b1 = core(renorm_core::universal::estimate_b1(
        &s.cascade, tips, b2.b2, cfg.depth, cfg.seed,
    ))?;
    let report = core(geometry_scan(&s.cascade, tips, &frames, kmax, b1.b1))?;
    write_csv(&cfg.output, "geometry.csv", &report.rows)?;
    let fit = diameter_bounds_check(&report);
    let top_k = kmax.min(cfg.depth.saturating_sub(1));
    let t_law = core(t_vs_b1(&frames, b1.b1, cfg.map.eps_bar, 1..=top_k.max(1))).ok();
    let criterion = unbounded_geometry_criterion(b1.b1, s.fixed_point.sigma, kmax).ok();
    let body = json!({
        "b1": b1.b1,
        "b2": b2.b2,
        "scale_sigma": report.sigma,
        "rows": report.rows.len(),
        "targets": report.targets,
        "ratio_slope": report.ratio_slope,
        "log_scale_sigma": report.sigma.ln(),
        "diameter_fit": fit,
        "t_law": t_law,
        "criterion": criterion,
    });
    let summary = merge(s.header("geometry"), body);
    write_file(&cfg.output, "summary.json", &to_json(&summary)?)?;
    Ok((report, summary))
}

pub fn cmd_holder(b1: f64, b1_tilde: f64) -> CliResult<Value> {
    let h = core(holder_bound(b1, b1_tilde))?;
    Ok(json!({"schema": SCHEMA, "b1": b1, "b1_tilde": b1_tilde, "holder_bound": h}))
}

pub fn cmd_criterion(b1: f64, sigma: f64, kmax: usize) -> CliResult<Value> {
    let rows = core(unbounded_geometry_criterion(b1, sigma, kmax))?;
    let table: Vec<Value> = rows
        .iter()
        .map(|(k, n, gap)| json!({"k": k, "n": n, "gap": gap}))
        .collect();
    Ok(json!({"schema": SCHEMA, "b1": b1, "sigma": sigma, "rows": table}))
}
