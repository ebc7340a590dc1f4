//! The delta-regret oracle and empirical checkers for the inequalities the
//! regret analysis rests on.
//!
//! `f^delta` is the infimum threshold whose strict super-level set has
//! measure exactly `delta`; it is computed by bisection on the level-set
//! measure `G(z) = mu({f > z})`, independently of either bandit algorithm.
//! The checkers report `(estimate, bound, margin)` rather than bare
//! booleans so statistical failures are distinguishable from logical ones.

use rand::Rng;

use crate::cube_stats::IndexParams;
use crate::dyadic::{verify_exact_partition, DyadicCube, Point};
use crate::envs::{EnvError, EnvironmentSpec};
use crate::trace::{RowKind, RunTrace};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("delta = {delta} is not f-admissible: G({f_delta}) = {g_at_f_delta} differs from delta by more than {tol}")]
    NonAdmissibleDelta {
        delta: f64,
        f_delta: f64,
        g_at_f_delta: f64,
        tol: f64,
    },
    #[error("delta must lie in (0,1), got {0}")]
    InvalidDelta(f64),
    #[error("could not bracket the level-set equation for delta = {0}")]
    BracketFailure(f64),
    #[error("quadrature budget exhausted: {0}")]
    QuadratureBudgetExceeded(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("cube chain violates nesting or the measure-ratio premise: {0}")]
    ChainNotNested(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Tolerance on `|G(f_delta) - delta|` below which `delta` is accepted as
/// admissible.
pub const DEFAULT_G_TOL: f64 = 1e-4;
/// Absolute width at which the bisection bracket stops shrinking.
const BRACKET_TOL: f64 = 1e-9;
/// Evaluation budget for cube means lacking a closed form.
const MEAN_BUDGET: usize = 32_768;

/// Result of the `f^delta` bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub delta: f64,
    /// Raw-function threshold `inf F^delta`.
    pub f_delta: f64,
    /// Final bisection bracket around the infimum.
    pub bracket: (f64, f64),
    pub admissible: bool,
    /// Whether `G(f_delta)` equals `delta` within tolerance, i.e. the
    /// infimum itself appears to belong to `F^delta` (it always does when
    /// `G` is right-continuous; kept as a tag rather than an assertion).
    pub infimum_in_set: bool,
    pub g_at_f_delta: f64,
}

impl AdmissibilityReport {
    /// `f^delta` on the mean-zero scale of the given environment.
    pub fn f_delta_shifted(&self, env: &EnvironmentSpec) -> f64 {
        self.f_delta - env.mean_shift()
    }
}

/// Bisection for `f^delta = inf { z : mu({f > z}) = delta }` on the raw
/// reward. Errors with [`OracleError::NonAdmissibleDelta`] when `G` jumps
/// past `delta` (a reward plateau of positive measure).
pub fn f_delta(
    env: &EnvironmentSpec,
    delta: f64,
    tol_g: f64,
) -> Result<AdmissibilityReport, OracleError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(OracleError::InvalidDelta(delta));
    }
    let g = |z: f64| env.level_set_measure(z);

    // Lower bracket: walk left until strictly above delta (G -> 1 there).
    let mut lo = -1.0;
    let mut tries = 0;
    while g(lo) <= delta {
        lo = lo * 2.0 - 1.0;
        tries += 1;
        if tries > 200 {
            return Err(OracleError::BracketFailure(delta));
        }
    }
    // Upper bracket: grow geometrically until below delta.
    let mut hi = lo.abs().max(1.0);
    tries = 0;
    while g(hi) > delta {
        hi = lo + (hi - lo) * 2.0;
        tries += 1;
        if tries > 200 {
            return Err(OracleError::BracketFailure(delta));
        }
    }
    // Invariant: G(lo) > delta >= G(hi); converges onto the infimum even
    // when F^delta is a plateau.
    while hi - lo > BRACKET_TOL {
        let mid = 0.5 * (lo + hi);
        if g(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let g_at = g(hi);
    let admissible = (g_at - delta).abs() <= tol_g;
    let report = AdmissibilityReport {
        delta,
        f_delta: hi,
        bracket: (lo, hi),
        admissible,
        infimum_in_set: admissible,
        g_at_f_delta: g_at,
    };
    if !admissible {
        return Err(OracleError::NonAdmissibleDelta {
            delta,
            f_delta: hi,
            g_at_f_delta: g_at,
            tol: tol_g,
        });
    }
    Ok(report)
}

fn raw_cube_mean(env: &EnvironmentSpec, cube: &DyadicCube) -> Result<(f64, f64), OracleError> {
    env.cube_mean(cube, MEAN_BUDGET)
        .map_err(|e| match e {
            EnvError::BadBudget => OracleError::QuadratureBudgetExceeded(cube.to_string()),
            other => OracleError::Env(other),
        })
}

/// Unclamped gap `f^delta - <f>_q` (shift-invariant).
pub fn gap(
    env: &EnvironmentSpec,
    report: &AdmissibilityReport,
    cube: &DyadicCube,
) -> Result<f64, OracleError> {
    Ok(report.f_delta - raw_cube_mean(env, cube)?.0)
}

/// Per-step delta-regret `max(0, f^delta - <f>_q)`.
pub fn step_regret(
    env: &EnvironmentSpec,
    report: &AdmissibilityReport,
    cube: &DyadicCube,
) -> Result<f64, OracleError> {
    Ok(gap(env, report, cube)?.max(0.0))
}

/// Per-episode delta-regret `M_d * max(0, f^delta - <f>_parent)`.
pub fn episode_regret(
    env: &EnvironmentSpec,
    report: &AdmissibilityReport,
    parent: &DyadicCube,
) -> Result<f64, OracleError> {
    let m_d = (1u64 << env.dim()) as f64;
    Ok(m_d * step_regret(env, report, parent)?)
}

/// One ledger row: the trace row plus its regret bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub t: u64,
    /// Cumulative arm pulls through this row.
    pub pulls: u64,
    pub kind: RowKind,
    pub cube: DyadicCube,
    /// Mean-zero cube mean `<f>_{Q_t}` (the conditional expected reward).
    pub cube_mean: f64,
    /// Clamped per-row regret (scaled by the number of arms in the row).
    pub delta_regret: f64,
    /// Unclamped per-row gap (same scaling).
    pub unclamped_gap: f64,
    /// Per-row traditional regret against `sup f`, when finite.
    pub traditional_regret: Option<f64>,
    pub cum_delta_regret: f64,
    pub cum_unclamped_gap: f64,
    pub cum_traditional_regret: Option<f64>,
    pub n_cubes: usize,
    pub min_cube_measure: f64,
}

/// Regret ledger of a run for one admissible delta.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger {
    pub delta: f64,
    pub f_delta_raw: f64,
    pub rows: Vec<LedgerRow>,
}

impl RegretLedger {
    /// Builds the ledger for `trace`. Each row contributes its arm count
    /// times the clamped (resp. unclamped) parent gap, so warm-up rows and
    /// episodes are handled uniformly.
    pub fn build(
        env: &EnvironmentSpec,
        report: &AdmissibilityReport,
        trace: &RunTrace,
    ) -> Result<Self, OracleError> {
        let mut rows = Vec::with_capacity(trace.rows.len());
        let mut pulls = 0u64;
        let mut cum_delta = 0.0;
        let mut cum_gap = 0.0;
        let mut cum_trad = env.finite_max_raw().map(|_| 0.0);
        for row in &trace.rows {
            let arms = row.arms.len() as f64;
            pulls += row.arms.len() as u64;
            let mean_raw = raw_cube_mean(env, &row.cube)?.0;
            let gap = report.f_delta - mean_raw;
            let delta_regret = arms * gap.max(0.0);
            let unclamped = arms * gap;
            let traditional = env.finite_max_raw().map(|fm| arms * (fm - mean_raw));
            cum_delta += delta_regret;
            cum_gap += unclamped;
            if let (Some(cum), Some(tr)) = (cum_trad.as_mut(), traditional) {
                *cum += tr;
            }
            rows.push(LedgerRow {
                t: row.t,
                pulls,
                kind: row.kind,
                cube: row.cube.clone(),
                cube_mean: mean_raw - env.mean_shift(),
                delta_regret,
                unclamped_gap: unclamped,
                traditional_regret: traditional,
                cum_delta_regret: cum_delta,
                cum_unclamped_gap: cum_gap,
                cum_traditional_regret: cum_trad,
                n_cubes: row.n_cubes,
                min_cube_measure: row.min_cube_measure,
            });
        }
        Ok(Self {
            delta: report.delta,
            f_delta_raw: report.f_delta,
            rows,
        })
    }

    pub fn final_cum_delta_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_delta_regret)
    }

    /// Cumulative delta-regret at the last row with `pulls <= limit`.
    pub fn cum_delta_regret_at_pulls(&self, limit: u64) -> f64 {
        self.rows
            .iter()
            .take_while(|r| r.pulls <= limit)
            .last()
            .map_or(0.0, |r| r.cum_delta_regret)
    }
}

/// Outcome of one empirical checker.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub estimate: f64,
    pub bound: f64,
    pub margin: f64,
    pub detail: String,
}

impl CheckOutcome {
    /// One line of the harness report: `checker,status,estimate,bound,margin`.
    pub fn report_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.name,
            if self.pass { "pass" } else { "fail" },
            self.estimate,
            self.bound,
            self.margin
        )
    }
}

/// Monte-Carlo check of the John-Nirenberg tail bound on `cube`: the
/// measure of `{ |f - <f>_q| > lambda }` against
/// `e * mu(q) * exp(-lambda / (e 2^d * norm_bound))`, with a 3-sigma
/// binomial margin.
pub fn jn_check(
    env: &EnvironmentSpec,
    cube: &DyadicCube,
    lambda: f64,
    n_samples: usize,
    norm_bound: f64,
    rng: &mut impl Rng,
) -> Result<CheckOutcome, OracleError> {
    let mean = raw_cube_mean(env, cube)?.0;
    let mut exceed = 0usize;
    let mut drawn = 0usize;
    while drawn < n_samples {
        let p = cube.sample_uniform(rng);
        let v = env.raw_value(&p);
        if !v.is_finite() {
            continue; // singular null set
        }
        drawn += 1;
        if (v - mean).abs() > lambda {
            exceed += 1;
        }
    }
    let p_hat = exceed as f64 / n_samples as f64;
    let mu = cube.measure();
    let estimate = p_hat * mu;
    let c2 = std::f64::consts::E * (1u64 << env.dim()) as f64;
    let exponent = if lambda == 0.0 {
        0.0
    } else {
        lambda / (c2 * norm_bound)
    };
    let bound = std::f64::consts::E * mu * (-exponent).exp();
    let margin = 3.0 * (p_hat * (1.0 - p_hat) / n_samples as f64).sqrt() * mu;
    Ok(CheckOutcome {
        name: "john_nirenberg".to_string(),
        pass: estimate <= bound + margin,
        estimate,
        bound,
        margin,
        detail: format!("cube={cube} lambda={lambda} norm_bound={norm_bound}"),
    })
}

/// Monte-Carlo lower estimate of the BMO norm: the largest mean
/// oscillation observed over randomly sampled axis-aligned rectangles.
/// Nondecreasing in `n_rects` for a fixed rng stream.
pub fn bmo_norm_estimate(
    env: &EnvironmentSpec,
    n_rects: usize,
    n_samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    let dim = env.dim();
    let mut best: f64 = 0.0;
    for _ in 0..n_rects {
        // A non-degenerate random rectangle inside [0,1)^d.
        let mut lo = vec![0.0; dim];
        let mut hi = vec![0.0; dim];
        for i in 0..dim {
            loop {
                let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                if (a - b).abs() > 1e-9 {
                    lo[i] = a.min(b);
                    hi[i] = a.max(b);
                    break;
                }
            }
        }
        let mut values = Vec::with_capacity(n_samples);
        while values.len() < n_samples {
            let coords: Vec<f64> = (0..dim)
                .map(|i| lo[i] + rng.gen::<f64>() * (hi[i] - lo[i]))
                .collect();
            let v = env.raw_value(&Point::new(coords).expect("rect inside the unit cube"));
            if v.is_finite() {
                values.push(v);
            }
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let osc = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / values.len() as f64;
        best = best.max(osc);
    }
    best
}

/// Deterministic point-scattering inequality on a completed partition
/// trace: `sum_t 1/max(1, n_t(Q_t)) <= e |Q_T| ln(1 + (e-1) T / |Q_T|)`.
pub fn point_scattering_check(trace: &RunTrace) -> Result<CheckOutcome, OracleError> {
    if trace.rows.iter().any(|r| r.kind != RowKind::Step) {
        return Err(OracleError::MalformedTrace(
            "point scattering applies to partition (step) traces only".to_string(),
        ));
    }
    if trace.rows.is_empty() {
        return Err(OracleError::MalformedTrace("empty trace".to_string()));
    }
    verify_exact_partition(&trace.final_partition).map_err(OracleError::MalformedTrace)?;
    // Nested refinement never re-coarsens: a later selection cannot
    // strictly contain an earlier one, and every selection contains some
    // final leaf.
    for (i, row) in trace.rows.iter().enumerate() {
        for earlier in &trace.rows[..i] {
            if row.cube.contains_cube(&earlier.cube) && row.cube != earlier.cube {
                return Err(OracleError::MalformedTrace(format!(
                    "cube {} at t={} contains earlier selection {}",
                    row.cube, row.t, earlier.cube
                )));
            }
        }
        if !trace
            .final_partition
            .iter()
            .any(|leaf| row.cube.contains_cube(leaf))
        {
            return Err(OracleError::MalformedTrace(format!(
                "cube {} at t={} contains no final leaf",
                row.cube, row.t
            )));
        }
    }
    let mut lhs = 0.0;
    for (i, row) in trace.rows.iter().enumerate() {
        let mut n_t = 0u64;
        for earlier in &trace.rows[..i] {
            n_t += earlier
                .arms
                .iter()
                .filter(|a| row.cube.contains(a))
                .count() as u64;
        }
        lhs += 1.0 / n_t.max(1) as f64;
    }
    let t = trace.rows.len() as f64;
    let q_t = trace.final_partition.len() as f64;
    let e = std::f64::consts::E;
    let rhs = e * q_t * (1.0 + (e - 1.0) * t / q_t).ln();
    Ok(CheckOutcome {
        name: "point_scattering".to_string(),
        pass: lhs <= rhs,
        estimate: lhs,
        bound: rhs,
        margin: 0.0,
        detail: format!("T={t} |Q_T|={q_t}"),
    })
}

/// Checks the nested-mean drift bound `|<f>_{q_0} - <f>_{q_k}| <= K k ||f||`
/// along a nested cube chain with measure ratio at most `K` per level.
pub fn nested_mean_drift_check(
    env: &EnvironmentSpec,
    chain: &[DyadicCube],
    k_ratio: f64,
    norm_bound: f64,
) -> Result<CheckOutcome, OracleError> {
    if chain.is_empty() {
        return Err(OracleError::ChainNotNested("empty chain".to_string()));
    }
    for pair in chain.windows(2) {
        if !pair[1].contains_cube(&pair[0]) {
            return Err(OracleError::ChainNotNested(format!(
                "{} does not contain {}",
                pair[1], pair[0]
            )));
        }
        if pair[1].measure() > k_ratio * pair[0].measure() * (1.0 + 1e-12) {
            return Err(OracleError::ChainNotNested(format!(
                "measure ratio {} exceeds K = {k_ratio}",
                pair[1].measure() / pair[0].measure()
            )));
        }
    }
    let (m0, se0) = raw_cube_mean(env, &chain[0])?;
    let (mk, sek) = raw_cube_mean(env, chain.last().unwrap())?;
    let k = (chain.len() - 1) as f64;
    let estimate = (m0 - mk).abs();
    let bound = k_ratio * k * norm_bound;
    let margin = 3.0 * (se0 + sek);
    Ok(CheckOutcome {
        name: "nested_mean_drift".to_string(),
        pass: estimate <= bound + margin,
        estimate,
        bound,
        margin,
        detail: format!("k={k} K={k_ratio} norm_bound={norm_bound}"),
    })
}

/// Play-count bound on a zooming trace: a parent of measure
/// `mu > M_d eta` is selected at most
/// `ceil((C / (alpha ln(mu/eta)))^2) + 1` episodes.
pub fn playcount_check(
    trace: &RunTrace,
    params: &IndexParams,
    alpha: f64,
) -> Result<CheckOutcome, OracleError> {
    if trace.rows.iter().any(|r| r.kind == RowKind::Step) {
        return Err(OracleError::MalformedTrace(
            "play-count bound applies to zooming (episode) traces only".to_string(),
        ));
    }
    let mut selections: std::collections::HashMap<&DyadicCube, u64> =
        std::collections::HashMap::new();
    for row in trace.rows.iter().filter(|r| r.kind == RowKind::Episode) {
        *selections.entry(&row.cube).or_insert(0) += 1;
    }
    let c = params.confidence_width();
    let m_d = params.doubling as f64;
    let mut worst_ratio = 0.0f64;
    let mut worst = String::new();
    let mut violations = 0usize;
    for (cube, &count) in &selections {
        let mu = cube.measure();
        if mu <= m_d * params.eta {
            continue;
        }
        let bound = (c / (alpha * (mu / params.eta).ln())).powi(2).ceil() + 1.0;
        let ratio = count as f64 / bound;
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst = format!("cube={cube} count={count} bound={bound}");
        }
        if count as f64 > bound {
            violations += 1;
        }
    }
    Ok(CheckOutcome {
        name: "play_count".to_string(),
        pass: violations == 0,
        estimate: worst_ratio,
        bound: 1.0,
        margin: 0.0,
        detail: if worst.is_empty() {
            "no parent above the measure floor was selected".to_string()
        } else {
            worst
        },
    })
}

/// Structural check of a trace's final partition snapshot against the
/// guarantees of its algorithm (cube-count and minimal-measure bounds).
pub fn partition_check(trace: &RunTrace, params: &IndexParams) -> CheckOutcome {
    let name = "final_partition".to_string();
    if let Err(reason) = verify_exact_partition(&trace.final_partition) {
        return CheckOutcome {
            name,
            pass: false,
            estimate: f64::NAN,
            bound: 1.0,
            margin: 0.0,
            detail: reason,
        };
    }
    let min_measure = trace
        .final_partition
        .iter()
        .map(|c| c.measure())
        .fold(f64::INFINITY, f64::min);
    // Measure floors differ per algorithm: the partition rule keeps cells
    // at or above eta, the zooming rule stops at eta / M_d, and the fixed
    // grids round to the dyadic measure closest to eta (at worst a factor
    // sqrt(M_d) below).
    let (floor, count_ok) = match trace.meta.algo.as_str() {
        "p" => (
            params.eta,
            trace.final_partition.len() as f64 <= 1.0 / params.eta,
        ),
        _ => (params.eta / params.doubling as f64, true),
    };
    CheckOutcome {
        name,
        pass: min_measure >= floor && count_ok,
        estimate: min_measure,
        bound: floor,
        margin: 0.0,
        detail: format!("cubes={}", trace.final_partition.len()),
    }
}
