//! `bmo` — experiment runner for BMO bandit simulations.
//!
//! Subcommands:
//! - `bmo run`: execute seeded replications of an algorithm and write
//!   traces, regret ledgers, aggregates, and a checker report;
//! - `bmo check`: re-run the trace-level checkers on a saved trace;
//! - `bmo fdelta`: print an `f^delta` table for an environment.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use bmo_bandit::cube_stats::IndexParams;
use bmo_bandit::envs::EnvironmentSpec;
use bmo_bandit::harness::{self, AlgoKind, PartialConfig};
use bmo_bandit::oracle::{self, OracleError};
use bmo_bandit::trace::RunTrace;

#[derive(Parser)]
#[command(name = "bmo", version, about = "Continuum-armed bandit simulator for BMO rewards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (seeded replications, CSV outputs).
    Run(RunArgs),
    /// Run the trace-level checkers on a saved trace file.
    Check(CheckArgs),
    /// Print an f^delta table for an environment.
    Fdelta(FdeltaArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file with flat keys; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Algorithm: p, z, random-uniform, or grid-ucb.
    #[arg(long)]
    algo: Option<String>,
    /// Environment: log1d, log2x, himmelblau, styblinski, constant.
    #[arg(long)]
    env: Option<String>,
    /// Arm-space dimension (constant environment only).
    #[arg(long)]
    dim: Option<usize>,
    /// Reward value of the constant environment.
    #[arg(long)]
    constant_value: Option<f64>,
    /// Horizon: steps for p, episodes for z.
    #[arg(long = "T")]
    t: Option<u64>,
    /// Confidence parameter in (0,1).
    #[arg(long)]
    eps: Option<f64>,
    /// Resolution parameter in (0,1).
    #[arg(long)]
    eta: Option<f64>,
    /// Zooming rate (z only).
    #[arg(long)]
    alpha: Option<f64>,
    /// Regret threshold delta; repeat for several ledgers.
    #[arg(long = "delta")]
    deltas: Vec<f64>,
    /// Almost-sure noise bound D_E.
    #[arg(long = "d-e")]
    d_e: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent replications (seeds seed..seed+n-1).
    #[arg(long)]
    replications: Option<u32>,
    /// Concurrent replication workers.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Trace CSV produced by `bmo run`.
    #[arg(long)]
    trace: PathBuf,
    /// Optional file to write the report lines to (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FdeltaArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    constant_value: Option<f64>,
    /// Threshold delta; repeatable.
    #[arg(long = "delta", required = true)]
    deltas: Vec<f64>,
    /// Tolerance on |G(f_delta) - delta|.
    #[arg(long, default_value_t = oracle::DEFAULT_G_TOL)]
    tol: f64,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Check(args) => check(args),
        Command::Fdelta(args) => fdelta(args),
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let algo = match &args.algo {
        Some(s) => Some(s.parse::<AlgoKind>().map_err(anyhow::Error::msg)?),
        None => None,
    };
    let flags = PartialConfig {
        algo,
        env: args.env,
        dim: args.dim,
        constant_value: args.constant_value,
        horizon: args.t,
        eps: args.eps,
        eta: args.eta,
        alpha: args.alpha,
        deltas: if args.deltas.is_empty() {
            None
        } else {
            Some(args.deltas)
        },
        d_e: args.d_e,
        seed: args.seed,
        replications: args.replications,
        jobs: args.jobs,
        out_dir: args.out_dir,
    };
    let config = harness::parse_config(args.config.as_deref(), flags)?;
    let output = harness::run_experiment(&config)?;
    println!(
        "wrote {} trace(s), {} aggregate(s), and {} to {}",
        output.trace_paths.len(),
        output.aggregate_paths.len(),
        output.report_path.file_name().unwrap().to_string_lossy(),
        output.out_dir.display()
    );
    for (report, ledgers) in output.reports.iter().zip(&output.ledgers) {
        let finals: Vec<f64> = ledgers
            .iter()
            .map(|l| l.final_cum_delta_regret())
            .collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        println!(
            "delta={}: f_delta={:.6}, mean final cumulative delta-regret {:.4}",
            report.delta, report.f_delta, mean
        );
    }
    Ok(())
}

fn check(args: CheckArgs) -> anyhow::Result<()> {
    let trace = RunTrace::read_from(&args.trace)
        .with_context(|| format!("reading {}", args.trace.display()))?;
    let meta = &trace.meta;
    let env = EnvironmentSpec::builtin(
        &meta.env,
        Some(meta.dim),
        meta.constant_value,
        meta.noise_bound,
    )?;
    let params = IndexParams::new(env.dim(), meta.horizon, meta.eps, meta.eta, meta.noise_bound)?;
    let mut outcomes = vec![oracle::partition_check(&trace, &params)];
    match meta.algo.as_str() {
        "z" => {
            let alpha = match meta.alpha {
                Some(a) => a,
                None => bail!("zooming trace is missing its alpha"),
            };
            outcomes.push(oracle::playcount_check(&trace, &params, alpha)?);
        }
        _ => outcomes.push(oracle::point_scattering_check(&trace)?),
    }
    let mut lines = vec!["checker,status,estimate,bound,margin".to_string()];
    lines.extend(outcomes.iter().map(|o| o.report_line()));
    let text = lines.join("\n") + "\n";
    match &args.out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    if outcomes.iter().any(|o| !o.pass) {
        bail!("one or more checks failed");
    }
    Ok(())
}

fn fdelta(args: FdeltaArgs) -> anyhow::Result<()> {
    let env = EnvironmentSpec::builtin(&args.env, args.dim, args.constant_value, 0.0)?;
    println!("delta,f_delta,admissible,bracket_lo,bracket_hi");
    for &delta in &args.deltas {
        match oracle::f_delta(&env, delta, args.tol) {
            Ok(report) => println!(
                "{},{},{},{},{}",
                report.delta,
                report.f_delta,
                report.admissible,
                report.bracket.0,
                report.bracket.1
            ),
            Err(OracleError::NonAdmissibleDelta { delta, f_delta, .. }) => {
                println!("{delta},{f_delta},false,,")
            }
            Err(other) => return Err(other.into()),
        }
    }
    Ok(())
}
