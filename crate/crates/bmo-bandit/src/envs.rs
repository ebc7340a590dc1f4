//! Reward environments: BMO test functions (including unbounded ones),
//! bounded noise, and analytic helpers for cube means and level-set
//! measures.
//!
//! Every environment carries a raw reward `raw_f` and a `mean_shift` chosen
//! so the observed reward `f = raw_f - mean_shift` integrates to zero over
//! `[0,1)^d`. Oracle quantities (`f^delta`, cube means) are computed on the
//! raw function; regret gaps are differences, so the convention cancels.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dyadic::{DyadicCube, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown environment `{0}` (expected log1d, log2x, himmelblau, styblinski, constant)")]
    UnknownEnvironment(String),
    #[error("environment `{name}` requires dimension {expected}, got {got}")]
    DimensionMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("quadrature budget must be positive")]
    BadBudget,
    #[error("could not draw a finite reward in cube {0} after {1} attempts")]
    SingularRegion(String, u32),
}

/// Resolution of the grid search locating extrema of the 2-d benchmarks.
const EXTREMA_GRID: usize = 2048;
/// Resolution of the value grid backing empirical level-set measures.
const LEVELSET_GRID: usize = 1024;
/// Randomized shifts used by the quasi Monte Carlo cube-mean estimator.
const QMC_SHIFTS: usize = 8;
const REDRAW_LIMIT: u32 = 64;

/// The 2-d minimization benchmarks, on their native `[-5,5]^2` domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bench2d {
    Himmelblau,
    StyblinskiTang,
}

impl Bench2d {
    fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            Bench2d::Himmelblau => {
                let a = x * x + y - 11.0;
                let b = x + y * y - 7.0;
                a * a + b * b
            }
            Bench2d::StyblinskiTang => {
                0.5 * (x.powi(4) - 16.0 * x * x + 5.0 * x + y.powi(4) - 16.0 * y * y + 5.0 * y)
            }
        }
    }

    /// Exact mean of the polynomial over the box `[x0,x1] x [y0,y1]`.
    fn box_mean(self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let m1 = |a: f64, b: f64| (a + b) / 2.0;
        let m2 = |a: f64, b: f64| (a * a + a * b + b * b) / 3.0;
        let m4 = |a: f64, b: f64| (b.powi(5) - a.powi(5)) / (5.0 * (b - a));
        match self {
            Bench2d::Himmelblau => {
                // (x^2+y-11)^2 + (x+y^2-7)^2 expanded into monomials.
                m4(x0, x1) + m4(y0, y1) + 2.0 * m2(x0, x1) * m1(y0, y1)
                    + 2.0 * m1(x0, x1) * m2(y0, y1)
                    - 21.0 * m2(x0, x1)
                    - 13.0 * m2(y0, y1)
                    - 14.0 * m1(x0, x1)
                    - 22.0 * m1(y0, y1)
                    + 170.0
            }
            Bench2d::StyblinskiTang => {
                0.5 * (m4(x0, x1) - 16.0 * m2(x0, x1) + 5.0 * m1(x0, x1) + m4(y0, y1)
                    - 16.0 * m2(y0, y1)
                    + 5.0 * m1(y0, y1))
            }
        }
    }

    /// `(g_min, g_max)` located by a dense grid search over cell centers.
    fn grid_extrema(self) -> (f64, f64) {
        static HIMMELBLAU: OnceLock<(f64, f64)> = OnceLock::new();
        static STYBLINSKI: OnceLock<(f64, f64)> = OnceLock::new();
        let cell = match self {
            Bench2d::Himmelblau => &HIMMELBLAU,
            Bench2d::StyblinskiTang => &STYBLINSKI,
        };
        *cell.get_or_init(|| {
            let (lo, hi) = NATIVE_DOMAIN;
            let step = (hi - lo) / EXTREMA_GRID as f64;
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for i in 0..EXTREMA_GRID {
                let x = lo + (i as f64 + 0.5) * step;
                for j in 0..EXTREMA_GRID {
                    let y = lo + (j as f64 + 0.5) * step;
                    let g = self.eval(x, y);
                    min = min.min(g);
                    max = max.max(g);
                }
            }
            (min, max)
        })
    }

    /// Ascending raw reward values on the level-set grid.
    fn sorted_rewards(self) -> Arc<Vec<f64>> {
        static HIMMELBLAU: OnceLock<Arc<Vec<f64>>> = OnceLock::new();
        static STYBLINSKI: OnceLock<Arc<Vec<f64>>> = OnceLock::new();
        let cell = match self {
            Bench2d::Himmelblau => &HIMMELBLAU,
            Bench2d::StyblinskiTang => &STYBLINSKI,
        };
        cell.get_or_init(|| {
            let (g_min, g_max) = self.grid_extrema();
            let (lo, hi) = NATIVE_DOMAIN;
            let step = (hi - lo) / LEVELSET_GRID as f64;
            let mut values = Vec::with_capacity(LEVELSET_GRID * LEVELSET_GRID);
            for i in 0..LEVELSET_GRID {
                let x = lo + (i as f64 + 0.5) * step;
                for j in 0..LEVELSET_GRID {
                    let y = lo + (j as f64 + 0.5) * step;
                    values.push(rescale(self.eval(x, y), g_min, g_max));
                }
            }
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Arc::new(values)
        })
        .clone()
    }
}

const NATIVE_DOMAIN: (f64, f64) = (-5.0, 5.0);

/// Reward orientation: the minimization-style benchmarks are flipped and
/// min-max rescaled onto `[0,10]`, so their minima become the best arms.
fn rescale(g: f64, g_min: f64, g_max: f64) -> f64 {
    10.0 * (g_max - g) / (g_max - g_min)
}

#[derive(Debug, Clone, PartialEq)]
enum Reward {
    /// `ln(1/x)` on `(0,1)`, unbounded at 0.
    Log1d,
    /// `2 ln(1/x)` on `(0,1)`.
    Log2x,
    /// Constant reward (degenerate level sets).
    Constant { value: f64 },
    /// Flipped, rescaled 2-d benchmark.
    Rescaled2d {
        bench: Bench2d,
        g_min: f64,
        g_max: f64,
    },
}

/// Distribution of the observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Uniform on `[-D_E, D_E]`; zero-mean and almost surely bounded.
    Uniform,
}

/// A reward environment over `[0,1)^d`.
#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    name: String,
    dim: usize,
    reward: Reward,
    /// Constant `c` with `<raw_f> = c` over `[0,1)^d`; `f = raw_f - c`.
    mean_shift: f64,
    noise_bound: f64,
    noise_kind: NoiseKind,
    /// `sup raw_f` when finite, for traditional regret.
    finite_max: Option<f64>,
    /// Extra constant added to the raw reward (used to exercise
    /// shift-invariance; builtins use 0).
    raw_offset: f64,
}

impl EnvironmentSpec {
    /// Builds a named environment. `dim` and `constant_value` are only
    /// consulted by `constant`.
    pub fn builtin(
        name: &str,
        dim: Option<usize>,
        constant_value: Option<f64>,
        noise_bound: f64,
    ) -> Result<Self, EnvError> {
        let check_dim = |expected: usize| -> Result<usize, EnvError> {
            match dim {
                None => Ok(expected),
                Some(d) if d == expected => Ok(expected),
                Some(d) => Err(EnvError::DimensionMismatch {
                    name: name.to_string(),
                    expected,
                    got: d,
                }),
            }
        };
        let (dim, reward, mean_shift, finite_max) = match name {
            // integral of ln(1/x) over (0,1) is 1
            "log1d" => (check_dim(1)?, Reward::Log1d, 1.0, None),
            "log2x" => (check_dim(1)?, Reward::Log2x, 2.0, None),
            "constant" => {
                let value = constant_value.unwrap_or(0.0);
                let d = dim.unwrap_or(1);
                if d == 0 || d > 15 {
                    return Err(EnvError::DimensionMismatch {
                        name: name.to_string(),
                        expected: 1,
                        got: d,
                    });
                }
                (d, Reward::Constant { value }, value, Some(value))
            }
            "himmelblau" | "styblinski" => {
                let bench = if name == "himmelblau" {
                    Bench2d::Himmelblau
                } else {
                    Bench2d::StyblinskiTang
                };
                let (g_min, g_max) = bench.grid_extrema();
                let (lo, hi) = NATIVE_DOMAIN;
                let shift = rescale(bench.box_mean(lo, hi, lo, hi), g_min, g_max);
                (
                    check_dim(2)?,
                    Reward::Rescaled2d { bench, g_min, g_max },
                    shift,
                    Some(10.0),
                )
            }
            other => return Err(EnvError::UnknownEnvironment(other.to_string())),
        };
        Ok(Self {
            name: name.to_string(),
            dim,
            reward,
            mean_shift,
            noise_bound,
            noise_kind: NoiseKind::Uniform,
            finite_max,
            raw_offset: 0.0,
        })
    }

    /// A copy of the environment with a constant added to the raw reward.
    /// `f^delta` and every cube mean move by the same constant, so regret
    /// gaps are unchanged.
    pub fn with_raw_offset(mut self, offset: f64) -> Self {
        self.raw_offset += offset;
        self.mean_shift += offset;
        if let Some(m) = self.finite_max.as_mut() {
            *m += offset;
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean_shift(&self) -> f64 {
        self.mean_shift
    }

    pub fn noise_bound(&self) -> f64 {
        self.noise_bound
    }

    pub fn noise_kind(&self) -> NoiseKind {
        self.noise_kind
    }

    /// `sup raw_f` when finite.
    pub fn finite_max_raw(&self) -> Option<f64> {
        self.finite_max
    }

    /// The constant environment's reward value, if this is one.
    pub fn constant_value(&self) -> Option<f64> {
        match self.reward {
            Reward::Constant { value } => Some(value - self.raw_offset),
            _ => None,
        }
    }

    fn map_to_native(&self, c: f64) -> f64 {
        let (lo, hi) = NATIVE_DOMAIN;
        lo + c * (hi - lo)
    }

    /// Raw reward; `+inf` on the (measure-zero) singular set.
    pub fn raw_value(&self, a: &Point) -> f64 {
        assert_eq!(a.dim(), self.dim, "dimension mismatch in raw_value");
        let base = match &self.reward {
            Reward::Log1d => (1.0 / a.coords()[0]).ln(),
            Reward::Log2x => 2.0 * (1.0 / a.coords()[0]).ln(),
            Reward::Constant { value } => *value,
            Reward::Rescaled2d { bench, g_min, g_max } => {
                let x = self.map_to_native(a.coords()[0]);
                let y = self.map_to_native(a.coords()[1]);
                rescale(bench.eval(x, y), *g_min, *g_max)
            }
        };
        base + self.raw_offset
    }

    /// Mean-zero reward `f(a) = raw_f(a) - mean_shift`.
    pub fn value(&self, a: &Point) -> f64 {
        self.raw_value(a) - self.mean_shift
    }

    fn noise_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        (2.0 * u - 1.0) * self.noise_bound
    }

    /// Noisy observation `y = f(a) + E_a` with `|E_a| <= D_E`.
    pub fn observe<R: Rng + ?Sized>(&self, a: &Point, rng: &mut R) -> f64 {
        let f = self.value(a);
        debug_assert!(f.is_finite(), "observe called on a singular point");
        f + self.noise_draw(rng)
    }

    /// Draws a uniform arm in `cube` and observes it. A draw landing on a
    /// singular point (possible only on a null set) is redrawn within the
    /// same cube, which leaves the uniform tie-breaking law unchanged.
    pub fn draw_in_cube<R: Rng + ?Sized>(
        &self,
        cube: &DyadicCube,
        rng: &mut R,
    ) -> Result<(Point, f64), EnvError> {
        for _ in 0..REDRAW_LIMIT {
            let arm = cube.sample_uniform(rng);
            let f = self.raw_value(&arm) - self.mean_shift;
            if f.is_finite() {
                let y = f + self.noise_draw(rng);
                return Ok((arm, y));
            }
        }
        Err(EnvError::SingularRegion(cube.to_string(), REDRAW_LIMIT))
    }

    /// Exact raw cube mean when a closed form exists.
    pub fn analytic_cube_mean(&self, q: &DyadicCube) -> Option<f64> {
        let base = match &self.reward {
            Reward::Log1d => Some(log_interval_mean(q.lower(0), q.lower(0) + q.edge_len())),
            Reward::Log2x => Some(2.0 * log_interval_mean(q.lower(0), q.lower(0) + q.edge_len())),
            Reward::Constant { value } => Some(*value),
            Reward::Rescaled2d { bench, g_min, g_max } => {
                let x0 = self.map_to_native(q.lower(0));
                let x1 = self.map_to_native(q.lower(0) + q.edge_len());
                let y0 = self.map_to_native(q.lower(1));
                let y1 = self.map_to_native(q.lower(1) + q.edge_len());
                Some(rescale(bench.box_mean(x0, x1, y0, y1), *g_min, *g_max))
            }
        };
        base.map(|m| m + self.raw_offset)
    }

    /// Raw cube mean `<raw_f>_q` with a standard-error estimate: the closed
    /// form when available (error 0), otherwise randomized quasi Monte
    /// Carlo with `budget` evaluations.
    pub fn cube_mean(&self, q: &DyadicCube, budget: usize) -> Result<(f64, f64), EnvError> {
        if let Some(exact) = self.analytic_cube_mean(q) {
            return Ok((exact, 0.0));
        }
        self.cube_mean_qmc(q, budget)
    }

    /// Randomized-shift Halton estimate of the raw cube mean, with the
    /// standard error across shifts. Independent of the analytic route.
    pub fn cube_mean_qmc(&self, q: &DyadicCube, budget: usize) -> Result<(f64, f64), EnvError> {
        if budget == 0 {
            return Err(EnvError::BadBudget);
        }
        let per_shift = (budget / QMC_SHIFTS).max(1);
        let mut shift_rng = ChaCha8Rng::seed_from_u64(0x517c_c1b7_2722_0a95);
        let mut means = Vec::with_capacity(QMC_SHIFTS);
        let edge = q.edge_len();
        for _ in 0..QMC_SHIFTS {
            let shifts: Vec<f64> = (0..self.dim).map(|_| shift_rng.gen::<f64>()).collect();
            let mut sum = 0.0;
            for n in 0..per_shift {
                let coords: Vec<f64> = (0..self.dim)
                    .map(|i| {
                        let u = (radical_inverse(HALTON_PRIMES[i], n as u64 + 1) + shifts[i])
                            .fract()
                            .max(f64::MIN_POSITIVE);
                        q.lower(i) + u * edge
                    })
                    .collect();
                sum += self.raw_value(&Point::new(coords).expect("point inside cube"));
            }
            means.push(sum / per_shift as f64);
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let var =
            means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (means.len() as f64 - 1.0);
        Ok((mean, (var / means.len() as f64).sqrt()))
    }

    /// Level-set measure `G(z) = mu({ raw_f > z })`; analytic for the 1-d
    /// environments, a dense value grid for the 2-d benchmarks.
    /// Nonincreasing in `z`.
    pub fn level_set_measure(&self, z: f64) -> f64 {
        let z = z - self.raw_offset;
        match &self.reward {
            Reward::Log1d => (-z).exp().min(1.0),
            Reward::Log2x => (-z / 2.0).exp().min(1.0),
            Reward::Constant { value } => {
                if z < *value {
                    1.0
                } else {
                    0.0
                }
            }
            Reward::Rescaled2d { bench, .. } => {
                let values = bench.sorted_rewards();
                let at_most = values.partition_point(|&v| v <= z);
                (values.len() - at_most) as f64 / values.len() as f64
            }
        }
    }
}

/// Mean of `ln(1/x)` over `[a,b)` in `(0,1)`: antiderivative `x - x ln x`.
fn log_interval_mean(a: f64, b: f64) -> f64 {
    let anti = |t: f64| if t == 0.0 { 0.0 } else { t - t * t.ln() };
    (anti(b) - anti(a)) / (b - a)
}

const HALTON_PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(base: u64, mut n: u64) -> f64 {
    let mut inv = 0.0;
    let mut f = 1.0 / base as f64;
    while n > 0 {
        inv += (n % base) as f64 * f;
        n /= base;
        f /= base as f64;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube(s: &str) -> DyadicCube {
        s.parse().unwrap()
    }

    #[test]
    fn log1d_interval_means() {
        let env = EnvironmentSpec::builtin("log1d", None, None, 0.0).unwrap();
        // <ln(1/x)> over (0, 1/2) = 1 + ln 2.
        let m = env.analytic_cube_mean(&cube("1:0")).unwrap();
        assert!((m - 1.693_147_180_559_945_4).abs() < 1e-12, "m={m}");
        assert_eq!(env.mean_shift(), 1.0);
    }

    #[test]
    fn log2x_appendix_means() {
        // <2 ln(1/x)> over (0, x] = 2 + 2 ln(1/x) at dyadic x.
        let env = EnvironmentSpec::builtin("log2x", None, None, 0.0).unwrap();
        for k in 1..10u32 {
            let q = DyadicCube::new(k, vec![0]).unwrap();
            let x = q.edge_len();
            let m = env.analytic_cube_mean(&q).unwrap();
            assert!((m - (2.0 + 2.0 * (1.0 / x).ln())).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_env() {
        let env = EnvironmentSpec::builtin("constant", Some(2), Some(3.0), 0.0).unwrap();
        for q in ["0:0,0", "2:1,3"] {
            assert_eq!(env.analytic_cube_mean(&cube(q)).unwrap(), 3.0);
        }
        assert_eq!(env.level_set_measure(2.9), 1.0);
        assert_eq!(env.level_set_measure(3.0), 0.0);
        let a = Point::new(vec![0.3, 0.4]).unwrap();
        assert_eq!(env.value(&a), 0.0);
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let env = EnvironmentSpec::builtin("log1d", None, None, 0.0).unwrap();
        let a = Point::new(vec![0.25]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = env.observe(&a, &mut rng);
        assert_eq!(y, (4.0f64).ln() - 1.0);
    }

    #[test]
    fn noise_is_bounded_and_centered() {
        let env = EnvironmentSpec::builtin("constant", Some(1), Some(0.0), 0.1).unwrap();
        let a = Point::new(vec![0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let y = env.observe(&a, &mut rng);
            assert!(y.abs() <= 0.1);
            sum += y;
        }
        // CLT: the sd of the mean is (D_E/sqrt(3))/sqrt(n); 3 sigma margin.
        let sigma_mean = 0.1 / 3f64.sqrt() / (n as f64).sqrt();
        assert!((sum / n as f64).abs() < 3.0 * sigma_mean);
    }

    #[test]
    fn observe_replays_identically() {
        let env = EnvironmentSpec::builtin("himmelblau", None, None, 0.1).unwrap();
        let root = DyadicCube::root(2).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (a1, y1) = env.draw_in_cube(&root, &mut r1).unwrap();
            let (a2, y2) = env.draw_in_cube(&root, &mut r2).unwrap();
            assert_eq!(a1, a2);
            assert_eq!(y1.to_bits(), y2.to_bits());
        }
    }

    #[test]
    fn level_sets_log1d() {
        let env = EnvironmentSpec::builtin("log1d", None, None, 0.0).unwrap();
        for z in [0.0, 0.5, 1.0, 3.0] {
            assert!((env.level_set_measure(z) - (-z).exp()).abs() < 1e-15);
        }
        // Below the essential infimum the super-level set is everything.
        assert_eq!(env.level_set_measure(-4.0), 1.0);
    }

    #[test]
    fn benchmarks_are_rescaled_to_unit_range() {
        for name in ["himmelblau", "styblinski"] {
            let env = EnvironmentSpec::builtin(name, None, None, 0.0).unwrap();
            let root = DyadicCube::root(2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..10_000 {
                let a = root.sample_uniform(&mut rng);
                let r = env.raw_value(&a);
                assert!((-0.01..=10.01).contains(&r), "{name}: raw={r}");
            }
            assert_eq!(env.finite_max_raw(), Some(10.0));
        }
    }

    #[test]
    fn builtins_are_mean_zero() {
        // The numeric mean of the shifted reward over the root is 0 within
        // quadrature tolerance.
        for name in ["log1d", "log2x", "himmelblau", "styblinski"] {
            let env = EnvironmentSpec::builtin(name, None, None, 0.0).unwrap();
            let root = DyadicCube::root(env.dim()).unwrap();
            let (raw_mean, se) = env.cube_mean_qmc(&root, 200_000).unwrap();
            let shifted = raw_mean - env.mean_shift();
            assert!(
                shifted.abs() < (6.0 * se).max(2e-3),
                "{name}: shifted mean {shifted}, se {se}"
            );
        }
    }

    #[test]
    fn analytic_and_qmc_means_agree() {
        let env = EnvironmentSpec::builtin("himmelblau", None, None, 0.0).unwrap();
        for q in ["0:0,0", "1:1,0", "3:2,5"] {
            let q = cube(q);
            let exact = env.analytic_cube_mean(&q).unwrap();
            let (est, se) = env.cube_mean_qmc(&q, 100_000).unwrap();
            assert!(
                (exact - est).abs() < (8.0 * se).max(5e-3),
                "cube {q}: exact {exact}, qmc {est} +/- {se}"
            );
        }
    }

    #[test]
    fn zero_budget_rejected() {
        let env = EnvironmentSpec::builtin("himmelblau", None, None, 0.0).unwrap();
        assert_eq!(
            env.cube_mean_qmc(&DyadicCube::root(2).unwrap(), 0),
            Err(EnvError::BadBudget)
        );
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!(
            EnvironmentSpec::builtin("nope", None, None, 0.0),
            Err(EnvError::UnknownEnvironment(_))
        ));
        assert!(matches!(
            EnvironmentSpec::builtin("log1d", Some(2), None, 0.0),
            Err(EnvError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn raw_offset_shifts_everything_in_lockstep() {
        let env = EnvironmentSpec::builtin("log1d", None, None, 0.0).unwrap();
        let shifted = env.clone().with_raw_offset(5.0);
        let q = cube("2:1");
        let a = Point::new(vec![0.3]).unwrap();
        assert!((shifted.raw_value(&a) - env.raw_value(&a) - 5.0).abs() < 1e-12);
        // The mean-zero observed reward is unchanged.
        assert!((shifted.value(&a) - env.value(&a)).abs() < 1e-12);
        let m0 = env.analytic_cube_mean(&q).unwrap();
        let m1 = shifted.analytic_cube_mean(&q).unwrap();
        assert!((m1 - m0 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn singular_point_evaluates_to_infinity() {
        let env = EnvironmentSpec::builtin("log1d", None, None, 0.0).unwrap();
        let a = Point::new(vec![0.0]).unwrap();
        assert!(env.raw_value(&a).is_infinite());
    }

    proptest! {
        #[test]
        fn level_set_measure_is_nonincreasing(
            z1 in -5.0f64..15.0,
            z2 in -5.0f64..15.0,
        ) {
            let env = EnvironmentSpec::builtin("styblinski", None, None, 0.0).unwrap();
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            prop_assert!(env.level_set_measure(lo) >= env.level_set_measure(hi));
        }

        #[test]
        fn draws_stay_in_cube_and_finite(seed in any::<u64>()) {
            let env = EnvironmentSpec::builtin("log2x", None, None, 0.1).unwrap();
            let q = DyadicCube::new(3, vec![0]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, y) = env.draw_in_cube(&q, &mut rng).unwrap();
            prop_assert!(q.contains(&a));
            prop_assert!(y.is_finite());
        }
    }
}
