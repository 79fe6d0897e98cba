use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use renorm_lab::commands::{self, cmd_criterion, cmd_holder, to_json, with_workers, Status};
use renorm_lab::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(
    name = "renorm-lab",
    version,
    about = "Period-doubling renormalization of 3D Henon-like maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the one-dimensional fixed point f★.
    Fixedpoint {
        #[arg(long, default_value_t = 14)]
        degree: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Print the full JSON document instead of a summary line.
        #[arg(long)]
        json: bool,
    },
    /// Build the cascade and write cascade.json and frames.csv.
    Cascade(ConfigArgs),
    /// Run every identity check and write verify.json.
    Verify(ConfigArgs),
    /// Estimate b₂, b₁, b_F and a(x) and write universal.json.
    Universal(ConfigArgs),
    /// Box geometry scan, Hölder bound or the arithmetic criterion.
    Geometry {
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        kmax: usize,
        /// `b1=<value> b1t=<value>`: print the Hölder-exponent bound.
        #[arg(long, num_args = 2, value_names = ["b1=..", "b1t=.."])]
        holder: Option<Vec<String>>,
        /// `b1=<value> [kmax=<k>] [sigma=<s>]`: print the (k, n, gap) table.
        #[arg(long, num_args = 1..=3, value_names = ["b1=..", "kmax=.."])]
        criterion: Option<Vec<String>>,
    },
}

fn key_values(items: &[String], allowed: &[&str]) -> CliResult<Vec<(String, f64)>> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("expected key=value, got {item:?}")))?;
            if !allowed.contains(&k) {
                return Err(CliError::Config(format!(
                    "unknown key {k:?}, expected one of {allowed:?}"
                )));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| CliError::Config(format!("{k} = {v:?} is not a number")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

fn lookup(pairs: &[(String, f64)], key: &str) -> Option<f64> {
    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
}

fn load(args_config: &Path, output: &Option<PathBuf>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(args_config)?;
    if let Some(o) = output {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fixedpoint { degree, tol, json } => {
            let r = with_workers(None, || commands::cmd_fixedpoint(degree, tol))??;
            if json {
                print!("{}", to_json(&r)?);
            } else {
                println!(
                    "sigma = {:.10}, residual = {:e}, iterations = {}",
                    r.sigma, r.residual, r.iterations
                );
            }
        }
        Command::Cascade(a) => {
            let cfg = load(&a.config, &a.output)?;
            with_workers(cfg.workers, || commands::cmd_cascade(&cfg))??;
            println!("wrote {}", cfg.output.display());
        }
        Command::Verify(a) => {
            let cfg = load(&a.config, &a.output)?;
            let r = with_workers(cfg.workers, || commands::cmd_verify(&cfg))??;
            for c in &r.checks {
                let status = match c.status {
                    Status::Pass => "pass",
                    Status::Fail => "FAIL",
                    Status::NotApplicable => "n/a ",
                };
                match (c.value, c.threshold) {
                    (Some(v), Some(t)) => println!("{status} {:<22} {v:.3e} <= {t:.1e}", c.name),
                    _ => println!("{status} {}", c.name),
                }
            }
            if !r.passed {
                return Err(CliError::Verification(r.failing().join(", ")));
            }
        }
        Command::Universal(a) => {
            let cfg = load(&a.config, &a.output)?;
            let r = with_workers(cfg.workers, || commands::cmd_universal(&cfg))??;
            println!(
                "b2 = {}, b1 = {}, b_F = {}, b1*b2 - b_F = {:e}",
                r["b2"],
                r["b1"],
                r["b_f"],
                r["b1_b2_minus_b_f"].as_f64().unwrap_or(f64::NAN)
            );
        }
        Command::Geometry {
            config,
            output,
            kmax,
            holder,
            criterion,
        } => {
            if let Some(h) = holder {
                let kv = key_values(&h, &["b1", "b1t"])?;
                let (Some(b1), Some(bt)) = (lookup(&kv, "b1"), lookup(&kv, "b1t")) else {
                    return Err(CliError::Config("--holder needs b1=.. and b1t=..".into()));
                };
                print!("{}", to_json(&cmd_holder(b1, bt)?)?);
            } else if let Some(c) = criterion {
                let kv = key_values(&c, &["b1", "kmax", "sigma"])?;
                let b1 = lookup(&kv, "b1")
                    .ok_or_else(|| CliError::Config("--criterion needs b1=..".into()))?;
                let k = lookup(&kv, "kmax").unwrap_or(kmax as f64);
                if !(k >= 0.0 && k.fract() == 0.0) {
                    return Err(CliError::Config(format!(
                        "kmax = {k} is not a non-negative integer"
                    )));
                }
                let sigma = match lookup(&kv, "sigma") {
                    Some(s) => s,
                    None => commands::cmd_fixedpoint(14, commands::FIXED_POINT_TOL)?.sigma,
                };
                print!("{}", to_json(&cmd_criterion(b1, sigma, k as usize)?)?);
            } else {
                let path =
                    config.ok_or_else(|| CliError::Config("geometry needs --config".into()))?;
                let cfg = load(&path, &output)?;
                let (report, _) =
                    with_workers(cfg.workers, || commands::cmd_geometry(&cfg, kmax))??;
                println!(
                    "{} rows, ratio slope {:?}, wrote {}",
                    report.rows.len(),
                    report.ratio_slope,
                    cfg.output.display()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("renorm-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
