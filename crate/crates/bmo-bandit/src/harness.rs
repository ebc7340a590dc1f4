//! Experiment harness: configuration, seeded replications, baselines, and
//! CSV/report emission.
//!
//! A run writes into its output directory:
//!
//! - `resolved_config.json` — the fully merged configuration;
//! - `trace_rep{i}.csv` — one trace per replication;
//! - `ledger_rep{i}_delta{d}.csv` — per-replication regret ledgers, one per
//!   requested delta, with the fixed column prefix
//!   `t,cum_delta_regret,cum_unclamped_gap,cum_traditional_regret,n_cubes,min_cube_measure`
//!   (a trailing `pulls` column carries the arm-pull axis);
//! - `aggregate_delta{d}.csv` — mean and standard deviation across
//!   replications per row;
//! - `report.txt` — checker results, one `checker,status,estimate,bound,margin`
//!   line each.
//!
//! Replication `i` always uses seed `seed + i`, and files are written in
//! replication order after all workers join, so identical configurations
//! produce byte-identical outputs regardless of `jobs`.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit_p::{self, BanditError};
use crate::bandit_z;
use crate::cube_stats::{IndexParams, StatsError};
use crate::dyadic::DyadicCube;
use crate::envs::{EnvError, EnvironmentSpec};
use crate::oracle::{
    self, f_delta, partition_check, playcount_check, point_scattering_check, AdmissibilityReport,
    OracleError, RegretLedger,
};
use crate::trace::{RowKind, RunTrace, TraceError, TraceMeta, TraceRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("config file {path}: {reason}")]
    ConfigFile { path: PathBuf, reason: String },
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which algorithm a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgoKind {
    #[serde(rename = "p")]
    P,
    #[serde(rename = "z")]
    Z,
    #[serde(rename = "random-uniform")]
    RandomUniform,
    #[serde(rename = "grid-ucb")]
    GridUcb,
}

impl AlgoKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgoKind::P => "p",
            AlgoKind::Z => "z",
            AlgoKind::RandomUniform => "random-uniform",
            AlgoKind::GridUcb => "grid-ucb",
        }
    }
}

impl FromStr for AlgoKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p" => Ok(AlgoKind::P),
            "z" => Ok(AlgoKind::Z),
            "random-uniform" => Ok(AlgoKind::RandomUniform),
            "grid-ucb" => Ok(AlgoKind::GridUcb),
            other => Err(format!(
                "unknown algorithm `{other}` (expected p, z, random-uniform, grid-ucb)"
            )),
        }
    }
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub algo: AlgoKind,
    pub env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_value: Option<f64>,
    #[serde(rename = "t")]
    pub horizon: u64,
    pub eps: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub deltas: Vec<f64>,
    pub d_e: f64,
    pub seed: u64,
    pub replications: u32,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

/// Partially specified configuration: the JSON config file and the CLI
/// flags both deserialize into this; flags override file values.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PartialConfig {
    pub algo: Option<AlgoKind>,
    pub env: Option<String>,
    pub dim: Option<usize>,
    pub constant_value: Option<f64>,
    #[serde(rename = "t")]
    pub horizon: Option<u64>,
    pub eps: Option<f64>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub deltas: Option<Vec<f64>>,
    pub d_e: Option<f64>,
    pub seed: Option<u64>,
    pub replications: Option<u32>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl PartialConfig {
    /// Field-wise override: values in `self` win over `base`.
    pub fn over(self, base: PartialConfig) -> PartialConfig {
        PartialConfig {
            algo: self.algo.or(base.algo),
            env: self.env.or(base.env),
            dim: self.dim.or(base.dim),
            constant_value: self.constant_value.or(base.constant_value),
            horizon: self.horizon.or(base.horizon),
            eps: self.eps.or(base.eps),
            eta: self.eta.or(base.eta),
            alpha: self.alpha.or(base.alpha),
            deltas: self.deltas.or(base.deltas),
            d_e: self.d_e.or(base.d_e),
            seed: self.seed.or(base.seed),
            replications: self.replications.or(base.replications),
            jobs: self.jobs.or(base.jobs),
            out_dir: self.out_dir.or(base.out_dir),
        }
    }
}

/// Merges CLI flags over an optional JSON config file, applies defaults,
/// and validates. Flags win over file values.
pub fn parse_config(
    file: Option<&Path>,
    flags: PartialConfig,
) -> Result<RunConfig, HarnessError> {
    let from_file = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            serde_json::from_str::<PartialConfig>(&text).map_err(|e| {
                HarnessError::ConfigFile {
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                }
            })?
        }
        None => PartialConfig::default(),
    };
    let merged = flags.over(from_file);
    fn require(name: &'static str) -> impl FnOnce() -> HarnessError {
        move || HarnessError::Config(format!("missing required {name}"))
    }
    let config = RunConfig {
        algo: merged.algo.ok_or_else(require("--algo"))?,
        env: merged.env.ok_or_else(require("--env"))?,
        dim: merged.dim,
        constant_value: merged.constant_value,
        horizon: merged.horizon.ok_or_else(require("--T"))?,
        eps: merged.eps.unwrap_or(0.01),
        eta: merged.eta.unwrap_or(0.001),
        alpha: merged.alpha,
        deltas: merged.deltas.unwrap_or_else(|| vec![0.01]),
        d_e: merged.d_e.unwrap_or(0.1),
        seed: merged.seed.unwrap_or(0),
        replications: merged.replications.unwrap_or(1),
        jobs: merged.jobs.unwrap_or(1),
        out_dir: merged.out_dir.unwrap_or_else(|| PathBuf::from("bmo-out")),
    };
    validate(&config)?;
    Ok(config)
}

/// Builds the environment a configuration names.
pub fn build_env(config: &RunConfig) -> Result<EnvironmentSpec, EnvError> {
    EnvironmentSpec::builtin(&config.env, config.dim, config.constant_value, config.d_e)
}

fn index_params(config: &RunConfig, env: &EnvironmentSpec) -> Result<IndexParams, StatsError> {
    IndexParams::new(env.dim(), config.horizon, config.eps, config.eta, config.d_e)
}

fn validate(config: &RunConfig) -> Result<(), HarnessError> {
    let env = build_env(config)?;
    let params = index_params(config, &env)?;
    if config.replications < 1 {
        return Err(HarnessError::Config("replications must be >= 1".into()));
    }
    if config.jobs < 1 {
        return Err(HarnessError::Config("jobs must be >= 1".into()));
    }
    if config.deltas.is_empty() {
        return Err(HarnessError::Config("at least one delta is required".into()));
    }
    for &d in &config.deltas {
        if !(d > 0.0 && d < 1.0) {
            return Err(HarnessError::Config(format!(
                "delta must lie in (0,1), got {d}"
            )));
        }
    }
    match config.algo {
        AlgoKind::Z => {
            let alpha = config
                .alpha
                .ok_or_else(|| HarnessError::Config("--alpha is required for algo z".into()))?;
            // Surfaces the admissible-range formula on a range error.
            bandit_z::warmup_count(&params, alpha)?;
        }
        _ => {
            if config.alpha.is_some() {
                return Err(HarnessError::Config(
                    "--alpha only applies to algo z".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Grid depth for the fixed-grid baselines: cell measure closest to `eta`.
fn baseline_grid_depth(eta: f64, dim: usize) -> u32 {
    let k = ((1.0 / eta).log2() / dim as f64).round();
    (k.max(0.0) as u32).min(crate::dyadic::MAX_DEPTH)
}

fn full_grid(dim: usize, depth: u32) -> Vec<DyadicCube> {
    let mut cells = vec![DyadicCube::root(dim).expect("dim >= 1")];
    for _ in 0..depth {
        cells = cells
            .into_iter()
            .flat_map(|c| c.direct_subcubes().expect("below depth cap"))
            .collect();
    }
    cells
}

/// Uniform-random baseline: `T` arms drawn uniformly over the whole space.
/// The ledger's cube surrogate is the cell of a fixed dyadic grid whose
/// cell measure is closest to `eta`.
pub fn baseline_random(
    params: &IndexParams,
    env: &EnvironmentSpec,
    seed: u64,
) -> Result<RunTrace, BanditError> {
    let depth = baseline_grid_depth(params.eta, params.dim);
    let n_cells = 1usize << (depth as usize * params.dim);
    let cell_measure = 2f64.powi(-((depth as i32) * params.dim as i32));
    let root = DyadicCube::root(params.dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(params.horizon as usize);
    for t in 1..=params.horizon {
        let (arm, y) = env.draw_in_cube(&root, &mut rng)?;
        let cell = DyadicCube::containing(&arm, depth)?;
        rows.push(TraceRow {
            t,
            kind: RowKind::Step,
            cube: cell,
            arms: vec![arm],
            observations: vec![y],
            n_cubes: n_cells,
            min_cube_measure: cell_measure,
        });
    }
    Ok(RunTrace {
        meta: TraceMeta {
            algo: "random-uniform".to_string(),
            env: env.name().to_string(),
            dim: params.dim,
            horizon: params.horizon,
            eps: params.eps,
            eta: params.eta,
            alpha: None,
            noise_bound: params.noise_bound,
            seed,
            constant_value: env.constant_value(),
        },
        rows,
        final_partition: full_grid(params.dim, depth),
    })
}

/// Fixed-grid UCB baseline: the same index as Bandit-BMO-P, played over a
/// static grid with cell measure closest to `eta` (no refinement).
pub fn grid_ucb(
    params: &IndexParams,
    env: &EnvironmentSpec,
    seed: u64,
) -> Result<RunTrace, BanditError> {
    use crate::cube_stats::CubeTree;
    let depth = baseline_grid_depth(params.eta, params.dim);
    let mut tree = CubeTree::new(params.dim)?;
    loop {
        let shallow: Vec<DyadicCube> = tree
            .leaves()
            .iter()
            .filter(|n| n.cube().depth() < depth)
            .map(|n| n.cube().clone())
            .collect();
        if shallow.is_empty() {
            break;
        }
        for cube in shallow {
            tree.split_leaf(&cube)?;
        }
    }
    let n_cells = tree.leaves().len();
    let cell_measure = 2f64.powi(-((depth as i32) * params.dim as i32));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(params.horizon as usize);
    for t in 1..=params.horizon {
        let cube = bandit_p::best_cube(tree.leaves().into_iter(), params)
            .expect("grid always has cells");
        let (arm, y) = env.draw_in_cube(&cube, &mut rng)?;
        tree.record_sample(arm.clone(), y);
        rows.push(TraceRow {
            t,
            kind: RowKind::Step,
            cube,
            arms: vec![arm],
            observations: vec![y],
            n_cubes: n_cells,
            min_cube_measure: cell_measure,
        });
    }
    let final_partition = tree.leaves().iter().map(|n| n.cube().clone()).collect();
    Ok(RunTrace {
        meta: TraceMeta {
            algo: "grid-ucb".to_string(),
            env: env.name().to_string(),
            dim: params.dim,
            horizon: params.horizon,
            eps: params.eps,
            eta: params.eta,
            alpha: None,
            noise_bound: params.noise_bound,
            seed,
            constant_value: env.constant_value(),
        },
        rows,
        final_partition,
    })
}

/// Runs one replication of the configured algorithm.
pub fn run_replication(
    config: &RunConfig,
    env: &EnvironmentSpec,
    rep: u32,
) -> Result<RunTrace, HarnessError> {
    let params = index_params(config, env)?;
    let seed = config.seed + u64::from(rep);
    let trace = match config.algo {
        AlgoKind::P => bandit_p::run(params, env, seed)?.0,
        AlgoKind::Z => {
            let alpha = config.alpha.expect("validated");
            bandit_z::run(params, alpha, env, seed)?.0
        }
        AlgoKind::RandomUniform => baseline_random(&params, env, seed)?,
        AlgoKind::GridUcb => grid_ucb(&params, env, seed)?,
    };
    Ok(trace)
}

fn trace_checkers(
    config: &RunConfig,
    params: &IndexParams,
    trace: &RunTrace,
) -> Result<Vec<oracle::CheckOutcome>, HarnessError> {
    let mut out = vec![partition_check(trace, params)];
    match config.algo {
        AlgoKind::Z => out.push(playcount_check(trace, params, config.alpha.expect("validated"))?),
        _ => out.push(point_scattering_check(trace)?),
    }
    Ok(out)
}

struct RepResult {
    trace: RunTrace,
    ledgers: Vec<RegretLedger>,
    report_lines: Vec<String>,
}

/// Everything a finished experiment produced, with file paths.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub trace_paths: Vec<PathBuf>,
    /// `[delta index][replication]`.
    pub ledgers: Vec<Vec<RegretLedger>>,
    pub aggregate_paths: Vec<PathBuf>,
    pub report_path: PathBuf,
    pub reports: Vec<AdmissibilityReport>,
}

/// Executes `replications` independent runs (seeds `seed+i`), computes the
/// regret ledgers for every requested delta, and writes traces, ledgers,
/// per-delta aggregates, and the checker report.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutput, HarnessError> {
    validate(config)?;
    let env = build_env(config)?;
    let reports: Vec<AdmissibilityReport> = config
        .deltas
        .iter()
        .map(|&d| f_delta(&env, d, oracle::DEFAULT_G_TOL))
        .collect::<Result<_, _>>()?;
    let params = index_params(config, &env)?;

    let n_reps = config.replications as usize;
    let results: Mutex<Vec<Option<Result<RepResult, HarnessError>>>> =
        Mutex::new((0..n_reps).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = config.jobs.min(n_reps);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let rep = next.fetch_add(1, Ordering::Relaxed);
                if rep >= n_reps {
                    return;
                }
                let result = (|| -> Result<RepResult, HarnessError> {
                    let trace = run_replication(config, &env, rep as u32)?;
                    let ledgers = reports
                        .iter()
                        .map(|r| RegretLedger::build(&env, r, &trace))
                        .collect::<Result<Vec<_>, _>>()?;
                    let mut report_lines = Vec::new();
                    for outcome in trace_checkers(config, &params, &trace)? {
                        report_lines.push(format!("rep{rep}/{}", outcome.report_line()));
                    }
                    // Precondition of the regret theorems: delta should
                    // exceed |Q_T| * eta.
                    for report in &reports {
                        let qt_eta = trace.final_partition.len() as f64 * config.eta;
                        if report.delta <= qt_eta {
                            report_lines.push(format!(
                                "rep{rep}/delta_precondition,warn,{},{qt_eta},0",
                                report.delta
                            ));
                        }
                    }
                    Ok(RepResult {
                        trace,
                        ledgers,
                        report_lines,
                    })
                })();
                results.lock().unwrap()[rep] = Some(result);
            });
        }
    });

    let results: Vec<RepResult> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every replication claimed"))
        .collect::<Result<_, _>>()?;

    std::fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let config_path = config.out_dir.join("resolved_config.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(config).expect("config serializes"),
    )
    .map_err(io_err(&config_path))?;

    let mut trace_paths = Vec::with_capacity(n_reps);
    for (rep, result) in results.iter().enumerate() {
        let path = config.out_dir.join(format!("trace_rep{rep:03}.csv"));
        result.trace.write_to(&path)?;
        trace_paths.push(path);
    }

    let mut ledgers: Vec<Vec<RegretLedger>> = (0..config.deltas.len()).map(|_| Vec::new()).collect();
    for (rep, result) in results.iter().enumerate() {
        for (di, ledger) in result.ledgers.iter().enumerate() {
            let path = config
                .out_dir
                .join(format!("ledger_rep{rep:03}_delta{}.csv", config.deltas[di]));
            write_ledger_csv(&path, ledger)?;
            ledgers[di].push(ledger.clone());
        }
    }

    let mut aggregate_paths = Vec::new();
    for (di, per_rep) in ledgers.iter().enumerate() {
        let path = config
            .out_dir
            .join(format!("aggregate_delta{}.csv", config.deltas[di]));
        write_aggregate_csv(&path, per_rep)?;
        aggregate_paths.push(path);
    }

    let report_path = config.out_dir.join("report.txt");
    {
        let file = std::fs::File::create(&report_path).map_err(io_err(&report_path))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "checker,status,estimate,bound,margin").map_err(io_err(&report_path))?;
        for result in &results {
            for line in &result.report_lines {
                writeln!(w, "{line}").map_err(io_err(&report_path))?;
            }
        }
    }

    Ok(ExperimentOutput {
        out_dir: config.out_dir.clone(),
        trace_paths,
        ledgers,
        aggregate_paths,
        report_path,
        reports,
    })
}

const LEDGER_HEADER: &str =
    "t,cum_delta_regret,cum_unclamped_gap,cum_traditional_regret,n_cubes,min_cube_measure,pulls";

fn write_ledger_csv(path: &Path, ledger: &RegretLedger) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str(&format!(
        "# bmo-ledger v1 delta={} f_delta_raw={}\n",
        ledger.delta, ledger.f_delta_raw
    ));
    out.push_str(LEDGER_HEADER);
    out.push('\n');
    for row in &ledger.rows {
        let trad = row
            .cum_traditional_regret
            .map(|v| v.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.t,
            row.cum_delta_regret,
            row.cum_unclamped_gap,
            trad,
            row.n_cubes,
            row.min_cube_measure,
            row.pulls
        ));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// One parsed ledger CSV row (the plot-ready columns).
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerCsvRow {
    pub t: u64,
    pub cum_delta_regret: f64,
    pub cum_unclamped_gap: f64,
    pub cum_traditional_regret: Option<f64>,
    pub n_cubes: f64,
    pub min_cube_measure: f64,
    pub pulls: u64,
}

pub fn read_ledger_csv(path: &Path) -> Result<Vec<LedgerCsvRow>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line == LEDGER_HEADER || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(HarnessError::Config(format!(
                "bad ledger row in {}: {line}",
                path.display()
            )));
        }
        let parse = |s: &str| -> Result<f64, HarnessError> {
            s.parse()
                .map_err(|_| HarnessError::Config(format!("bad number `{s}`")))
        };
        rows.push(LedgerCsvRow {
            t: parse(fields[0])? as u64,
            cum_delta_regret: parse(fields[1])?,
            cum_unclamped_gap: parse(fields[2])?,
            cum_traditional_regret: if fields[3].is_empty() {
                None
            } else {
                Some(parse(fields[3])?)
            },
            n_cubes: parse(fields[4])?,
            min_cube_measure: parse(fields[5])?,
            pulls: parse(fields[6])? as u64,
        });
    }
    Ok(rows)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_aggregate_csv(path: &Path, ledgers: &[RegretLedger]) -> Result<(), HarnessError> {
    let rows = ledgers[0].rows.len();
    debug_assert!(ledgers.iter().all(|l| l.rows.len() == rows));
    let mut out = String::new();
    out.push_str("t,pulls");
    for col in [
        "cum_delta_regret",
        "cum_unclamped_gap",
        "cum_traditional_regret",
        "n_cubes",
        "min_cube_measure",
    ] {
        out.push_str(&format!(",{col}_mean,{col}_sd"));
    }
    out.push('\n');
    for i in 0..rows {
        let first = &ledgers[0].rows[i];
        out.push_str(&format!("{},{}", first.t, first.pulls));
        let columns: [Vec<f64>; 5] = [
            ledgers.iter().map(|l| l.rows[i].cum_delta_regret).collect(),
            ledgers.iter().map(|l| l.rows[i].cum_unclamped_gap).collect(),
            ledgers
                .iter()
                .map(|l| l.rows[i].cum_traditional_regret.unwrap_or(f64::NAN))
                .collect(),
            ledgers.iter().map(|l| l.rows[i].n_cubes as f64).collect(),
            ledgers.iter().map(|l| l.rows[i].min_cube_measure).collect(),
        ];
        for column in &columns {
            let (mean, sd) = mean_sd(column);
            out.push_str(&format!(",{mean},{sd}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}
