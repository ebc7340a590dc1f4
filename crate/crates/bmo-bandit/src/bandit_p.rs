//! Bandit-BMO-P: UCB over a strict dyadic partition of the arm space.
//!
//! At each step the algorithm plays a uniform arm inside the partition
//! leaf maximizing `U_t = m_t + H_t + J`, records the observation, then
//! splits any leaf whose Hoeffding radius has fallen below its oscillation
//! bonus (the rule `H_t(q) >= J(q)`), so every surviving leaf keeps enough
//! statistical slack to cover the mean drift a subdivision can introduce.
//! Splitting terminates because `J` shrinks by `ln M_d` per level and
//! clamps at zero, while a child's radius is never below its parent's.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cube_stats::{
    hoeffding_radius, jn_bonus, ucb_index, CubeNode, CubeTree, IndexParams, StatsError,
};
use crate::dyadic::{DyadicCube, DyadicError};
use crate::envs::{EnvError, EnvironmentSpec};
use crate::trace::{RowKind, RunTrace, TraceMeta, TraceRow};

#[derive(Debug, Error)]
pub enum BanditError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error("step {t} exceeds the horizon {horizon}")]
    HorizonExceeded { t: u64, horizon: u64 },
    #[error("zooming rate {alpha} outside the admissible range (0, {bound}] = (0, (Psi + D_E) sqrt(2 ln(2 T^2/eps)) / ln(M_d/eta)]")]
    AlphaOutOfRange { alpha: f64, bound: f64 },
    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),
    #[error("environment dimension {env} does not match parameter dimension {params}")]
    DimensionMismatch { env: usize, params: usize },
}

/// The partition `Q_t` (the leaves of the tree) plus run state.
#[derive(Debug, Clone)]
pub struct PartitionState {
    tree: CubeTree,
    params: IndexParams,
    step: u64,
}

impl PartitionState {
    pub fn new(params: IndexParams) -> Result<Self, BanditError> {
        let tree = CubeTree::new(params.dim)?;
        let mut state = Self {
            tree,
            params,
            step: 0,
        };
        // A fresh root never violates the rule (H(1) >= Psi > J), but the
        // constructor still establishes the invariant explicitly.
        state.refine()?;
        Ok(state)
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn tree(&self) -> &CubeTree {
        &self.tree
    }

    /// The current partition: all childless nodes.
    pub fn leaves(&self) -> Vec<&CubeNode> {
        self.tree.leaves()
    }

    pub fn leaf_cubes(&self) -> Vec<DyadicCube> {
        self.leaves().iter().map(|n| n.cube().clone()).collect()
    }

    /// The leaf maximizing the index; ties go to the shallower, then
    /// lexicographically smaller cube, so replays are reproducible.
    pub fn select_cube(&self) -> DyadicCube {
        best_cube(self.leaves().into_iter(), &self.params)
            .expect("partition always has at least one leaf")
    }

    /// Splits leaves until every leaf satisfies `H_t(q) >= J(q)`, re-checking
    /// freshly created leaves until quiescent.
    pub fn refine(&mut self) -> Result<(), BanditError> {
        loop {
            let violating: Vec<DyadicCube> = self
                .leaves()
                .iter()
                .filter(|n| hoeffding_radius(n, &self.params) < jn_bonus(n.cube(), &self.params))
                .map(|n| n.cube().clone())
                .collect();
            if violating.is_empty() {
                return Ok(());
            }
            for cube in violating {
                self.tree.split_leaf(&cube)?;
            }
        }
    }

    /// Plays one step: select a cube, draw a uniform arm in it, observe,
    /// record, then update the partition.
    pub fn step(
        &mut self,
        env: &EnvironmentSpec,
        rng: &mut impl Rng,
    ) -> Result<TraceRow, BanditError> {
        if self.step >= self.params.horizon {
            return Err(BanditError::HorizonExceeded {
                t: self.step + 1,
                horizon: self.params.horizon,
            });
        }
        self.step += 1;
        let cube = self.select_cube();
        let (arm, y) = env.draw_in_cube(&cube, rng)?;
        self.tree.record_sample(arm.clone(), y);
        self.refine()?;
        let leaves = self.leaves();
        Ok(TraceRow {
            t: self.step,
            kind: RowKind::Step,
            cube,
            arms: vec![arm],
            observations: vec![y],
            n_cubes: leaves.len(),
            min_cube_measure: leaves
                .iter()
                .map(|n| n.cube().measure())
                .fold(f64::INFINITY, f64::min),
        })
    }
}

/// Argmax of the index over the given nodes with the deterministic
/// tie-break (smaller depth, then lexicographic coordinates).
pub(crate) fn best_cube<'a>(
    nodes: impl Iterator<Item = &'a CubeNode>,
    params: &IndexParams,
) -> Option<DyadicCube> {
    nodes
        .map(|n| (ucb_index(n, params), n.cube()))
        .max_by(|(ia, ca), (ib, cb)| {
            ia.partial_cmp(ib)
                .expect("indices are finite")
                .then_with(|| cb.cmp(ca))
        })
        .map(|(_, cube)| cube.clone())
}

/// Runs Bandit-BMO-P for `params.horizon` steps with its own seeded rng.
pub fn run(
    params: IndexParams,
    env: &EnvironmentSpec,
    seed: u64,
) -> Result<(RunTrace, PartitionState), BanditError> {
    if env.dim() != params.dim {
        return Err(BanditError::DimensionMismatch {
            env: env.dim(),
            params: params.dim,
        });
    }
    let meta = TraceMeta {
        algo: "p".to_string(),
        env: env.name().to_string(),
        dim: params.dim,
        horizon: params.horizon,
        eps: params.eps,
        eta: params.eta,
        alpha: None,
        noise_bound: params.noise_bound,
        seed,
        constant_value: env.constant_value(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PartitionState::new(params)?;
    let mut rows = Vec::with_capacity(state.params.horizon as usize);
    for _ in 0..state.params.horizon {
        rows.push(state.step(env, &mut rng)?);
    }
    let final_partition = state.leaf_cubes();
    Ok((
        RunTrace {
            meta,
            rows,
            final_partition,
        },
        state,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{partition_is_finer, verify_exact_partition, Point};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(dim: usize, horizon: u64, eps: f64, eta: f64, de: f64) -> IndexParams {
        IndexParams::new(dim, horizon, eps, eta, de).unwrap()
    }

    #[test]
    fn single_leaf_selects_root() {
        let state = PartitionState::new(params(2, 10, 0.01, 0.01, 0.0)).unwrap();
        assert_eq!(state.select_cube(), DyadicCube::root(2).unwrap());
    }

    #[test]
    fn argmax_prefers_higher_index() {
        // Two leaves with equal counts; the one holding the larger rewards
        // has the larger mean and hence the larger index.
        let p = params(1, 100, 0.01, 0.5, 0.0);
        let mut state = PartitionState::new(p).unwrap();
        state.tree.split_leaf(&DyadicCube::root(1).unwrap()).unwrap();
        state.tree.record_sample(Point::new(vec![0.1]).unwrap(), -3.0);
        state.tree.record_sample(Point::new(vec![0.9]).unwrap(), 5.0);
        assert_eq!(state.select_cube().to_string(), "1:1");
    }

    #[test]
    fn exact_ties_break_lexicographically() {
        let p = params(2, 100, 0.01, 0.5, 0.0);
        let mut state = PartitionState::new(p).unwrap();
        state.tree.split_leaf(&DyadicCube::root(2).unwrap()).unwrap();
        // Fresh identical leaves: all indices equal.
        assert_eq!(state.select_cube().to_string(), "1:0,0");
    }

    #[test]
    fn fresh_root_never_splits() {
        // eta = 1 makes J identically 0; more generally H(fresh) >= Psi > J.
        let mut state = PartitionState::new(params(1, 10, 0.5, 0.9, 0.0)).unwrap();
        state.refine().unwrap();
        assert_eq!(state.leaves().len(), 1);
    }

    #[test]
    fn refine_descends_to_the_derived_depth() {
        // All mass sits at x = 2^-25, so splits chase one chain downward.
        // With eta = 2^-20, T = 100, eps = 0.5, D_E = 0 and n = 65536
        // samples, iterating the rule symbolically stops at depth 19.
        let p = params(1, 100, 0.5, 2f64.powi(-20), 0.0);
        let width = p.confidence_width();
        let n = 65_536u64;
        let h = width / (n as f64).sqrt();
        let mut derived_depth = 0u32;
        while (2f64.powi(-(derived_depth as i32)) / p.eta).ln() > h {
            derived_depth += 1;
        }
        assert_eq!(derived_depth, 19);

        let mut state = PartitionState::new(p).unwrap();
        let x = Point::new(vec![2f64.powi(-25)]).unwrap();
        for _ in 0..n {
            state.tree.record_sample(x.clone(), 0.0);
        }
        state.refine().unwrap();
        let max_depth = state
            .leaves()
            .iter()
            .map(|l| l.cube().depth())
            .max()
            .unwrap();
        assert_eq!(max_depth, derived_depth);
        // One chain: a sibling leaf per level plus the deepest leaf.
        assert_eq!(state.leaves().len(), derived_depth as usize + 1);
        for leaf in state.leaves() {
            assert!(
                hoeffding_radius(leaf, state.params())
                    >= jn_bonus(leaf.cube(), state.params())
            );
        }
        verify_exact_partition(&state.leaf_cubes()).unwrap();
    }

    #[test]
    fn constant_noiseless_env_observes_zero() {
        let env = EnvironmentSpec::builtin("constant", Some(1), Some(4.0), 0.0).unwrap();
        let (trace, _) = run(params(1, 20, 0.01, 0.01, 0.0), &env, 3).unwrap();
        assert!(trace.rows.iter().all(|r| r.observations[0] == 0.0));
    }

    #[test]
    fn replay_is_deterministic() {
        let env = EnvironmentSpec::builtin("log1d", None, None, 0.1).unwrap();
        let (t1, _) = run(params(1, 50, 0.01, 0.01, 0.1), &env, 11).unwrap();
        let (t2, _) = run(params(1, 50, 0.01, 0.01, 0.1), &env, 11).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.to_csv(), t2.to_csv());
    }

    #[test]
    fn zero_horizon_gives_empty_trace() {
        let env = EnvironmentSpec::builtin("constant", Some(1), Some(0.0), 0.0).unwrap();
        let p = IndexParams::new(1, 1, 0.01, 0.01, 0.0).map(|mut p| {
            p.horizon = 0;
            p
        });
        let (trace, _) = run(p.unwrap(), &env, 0).unwrap();
        assert!(trace.rows.is_empty());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let env = EnvironmentSpec::builtin("himmelblau", None, None, 0.0).unwrap();
        let err = run(params(1, 5, 0.01, 0.01, 0.0), &env, 0);
        assert!(matches!(err, Err(BanditError::DimensionMismatch { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn short_runs_keep_partition_invariants(
            seed in any::<u64>(),
            horizon in 1u64..120,
            eta_pow in 3u32..10,
        ) {
            let eta = 2f64.powi(-(eta_pow as i32));
            let env = EnvironmentSpec::builtin("log1d", None, None, 0.1).unwrap();
            let p = params(1, horizon, 0.05, eta, 0.1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = PartitionState::new(p).unwrap();
            let mut previous = state.leaf_cubes();
            for _ in 0..horizon {
                state.step(&env, &mut rng).unwrap();
                let leaves = state.leaf_cubes();
                prop_assert!(verify_exact_partition(&leaves).is_ok());
                prop_assert!(leaves.len() as f64 <= 1.0 / eta);
                prop_assert!(partition_is_finer(&leaves, &previous));
                previous = leaves;
            }
        }
    }
}
