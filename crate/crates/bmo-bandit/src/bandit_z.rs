//! Bandit-BMO-Z: zooming over a growing collection of dyadic cubes.
//!
//! The collection starts at the root. Cubes with no sub-cube in the
//! collection are *terminal*; a direct super cube of a terminal cube is a
//! *pre-parent*; a pre-parent none of whose super cubes is a pre-parent is
//! a *parent*. Parents always partition the arm space (a terminal root is
//! a parent by convention). Each episode plays one uniform arm in every
//! direct sub-cube of the index-maximizing parent, then grows the
//! collection wherever a terminal cube's radius has dropped below
//! `alpha * ln(M_d mu / eta)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bandit_p::{best_cube, BanditError};
use crate::cube_stats::{hoeffding_radius, CubeNode, CubeTree, IndexParams};
use crate::dyadic::{verify_exact_partition, DyadicCube};
use crate::envs::EnvironmentSpec;
use crate::trace::{RowKind, RunTrace, TraceMeta, TraceRow};

/// Role flags of a cube in the collection. Roles overlap: a parent is
/// always a pre-parent, and a terminal root is a parent by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CubeRoles {
    pub terminal: bool,
    pub pre_parent: bool,
    pub parent: bool,
}

/// Largest admissible zooming rate: `C / ln(M_d / eta)` with
/// `C = (Psi + D_E) sqrt(2 ln(2 T^2 / eps))`. At this rate the zooming
/// rule is satisfiable with a single observation on the whole space.
pub fn admissible_alpha_bound(params: &IndexParams) -> f64 {
    params.confidence_width() / (params.doubling as f64 / params.eta).ln()
}

/// Number of warm-up arms: the unique `n` with `C/sqrt(n)` still at or
/// above `alpha ln(M_d/eta)` while `C/sqrt(n+1)` falls below it.
pub fn warmup_count(params: &IndexParams, alpha: f64) -> Result<u64, BanditError> {
    let bound = admissible_alpha_bound(params);
    if !(alpha > 0.0 && alpha <= bound) {
        return Err(BanditError::AlphaOutOfRange { alpha, bound });
    }
    let c = params.confidence_width();
    let target = alpha * (params.doubling as f64 / params.eta).ln();
    let mut n = (c / target).powi(2).floor() as u64;
    // Settle float edges so both defining inequalities hold exactly.
    while n > 1 && c / (n as f64).sqrt() < target {
        n -= 1;
    }
    while c / ((n + 1) as f64).sqrt() >= target {
        n += 1;
    }
    debug_assert!(c / (n as f64).sqrt() >= target);
    Ok(n)
}

/// The cube collection `Q_t` plus run state.
#[derive(Debug, Clone)]
pub struct CubeCollection {
    tree: CubeTree,
    params: IndexParams,
    alpha: f64,
    episode: u64,
}

impl CubeCollection {
    pub fn new(params: IndexParams, alpha: f64) -> Result<Self, BanditError> {
        let bound = admissible_alpha_bound(&params);
        if !(alpha > 0.0 && alpha <= bound) {
            return Err(BanditError::AlphaOutOfRange { alpha, bound });
        }
        Ok(Self {
            tree: CubeTree::new(params.dim)?,
            params,
            alpha,
            episode: 0,
        })
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn tree(&self) -> &CubeTree {
        &self.tree
    }

    /// All cubes of the collection with their roles, in depth-first order.
    /// Verifies that the parent cubes partition the arm space; a failure
    /// signals a bug, not a caller error.
    pub fn classify(&self) -> Result<BTreeMap<DyadicCube, CubeRoles>, BanditError> {
        let classified = self.classify_nodes();
        let parents: Vec<DyadicCube> = classified
            .iter()
            .filter(|(_, r)| r.parent)
            .map(|(n, _)| n.cube().clone())
            .collect();
        verify_exact_partition(&parents).map_err(BanditError::InternalInvariant)?;
        Ok(classified
            .into_iter()
            .map(|(n, r)| (n.cube().clone(), r))
            .collect())
    }

    fn classify_nodes(&self) -> Vec<(&CubeNode, CubeRoles)> {
        fn walk<'a>(
            node: &'a CubeNode,
            is_root: bool,
            ancestor_is_pre_parent: bool,
            out: &mut Vec<(&'a CubeNode, CubeRoles)>,
        ) {
            let terminal = node.is_leaf();
            let pre_parent = node
                .children()
                .is_some_and(|cs| cs.iter().any(CubeNode::is_leaf));
            let parent = (pre_parent && !ancestor_is_pre_parent) || (is_root && terminal);
            out.push((
                node,
                CubeRoles {
                    terminal,
                    pre_parent,
                    parent,
                },
            ));
            if let Some(cs) = node.children() {
                for c in cs {
                    walk(c, false, ancestor_is_pre_parent || pre_parent, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self.tree.root(), true, false, &mut out);
        out
    }

    /// The current parent cubes (a partition of the arm space).
    pub fn parent_cubes(&self) -> Vec<DyadicCube> {
        self.classify_nodes()
            .into_iter()
            .filter(|(_, r)| r.parent)
            .map(|(n, _)| n.cube().clone())
            .collect()
    }

    fn zoom_rule_rhs(&self, cube: &DyadicCube) -> f64 {
        self.alpha * (self.params.doubling as f64 * cube.measure() / self.params.eta).ln()
    }

    /// Grows the collection until every terminal cube satisfies
    /// `H_t >= alpha ln(M_d mu / eta)`. Non-terminal cubes keep the strict
    /// negation: they were split while violating, their radii only shrink,
    /// and the right side is fixed.
    pub fn zoom_refine(&mut self) -> Result<(), BanditError> {
        loop {
            let violating: Vec<DyadicCube> = self
                .tree
                .leaves()
                .iter()
                .filter(|n| hoeffding_radius(n, &self.params) < self.zoom_rule_rhs(n.cube()))
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

    /// The parent cube maximizing the index, with the deterministic
    /// tie-break shared with the partition algorithm.
    pub fn select_parent(&self) -> Result<DyadicCube, BanditError> {
        let classified = self.classify_nodes();
        let parents = classified
            .iter()
            .filter(|(_, r)| r.parent)
            .map(|(n, _)| *n);
        best_cube(parents, &self.params)
            .ok_or_else(|| BanditError::InternalInvariant("no parent cube".to_string()))
    }

    /// Plays the warm-up phase: `n_warm` uniform arms over the whole space,
    /// recorded into the tree like any other history.
    pub fn warmup(
        &mut self,
        env: &EnvironmentSpec,
        rng: &mut impl Rng,
    ) -> Result<Vec<TraceRow>, BanditError> {
        let n_warm = warmup_count(&self.params, self.alpha)?;
        let root = self.tree.root().cube().clone();
        let mut rows = Vec::with_capacity(n_warm as usize);
        for _ in 0..n_warm {
            let (arm, y) = env.draw_in_cube(&root, rng)?;
            self.tree.record_sample(arm.clone(), y);
            rows.push(TraceRow {
                t: 0,
                kind: RowKind::Warmup,
                cube: root.clone(),
                arms: vec![arm],
                observations: vec![y],
                n_cubes: self.tree.nodes().len(),
                min_cube_measure: self.min_cube_measure(),
            });
        }
        // By the defining inequality of n_warm this cannot split anything;
        // re-establishing the invariant keeps that explicit.
        self.zoom_refine()?;
        Ok(rows)
    }

    fn min_cube_measure(&self) -> f64 {
        self.tree
            .leaves()
            .iter()
            .map(|n| n.cube().measure())
            .fold(f64::INFINITY, f64::min)
    }

    /// Plays one episode: selects a parent, plays one uniform arm in each
    /// of its `M_d` direct sub-cubes (membership in the collection is not
    /// required for sampling), then applies the zooming rule.
    pub fn play_episode(
        &mut self,
        env: &EnvironmentSpec,
        rng: &mut impl Rng,
    ) -> Result<TraceRow, BanditError> {
        if self.episode >= self.params.horizon {
            return Err(BanditError::HorizonExceeded {
                t: self.episode + 1,
                horizon: self.params.horizon,
            });
        }
        self.episode += 1;
        let parent = self.select_parent()?;
        let mut arms = Vec::with_capacity(self.params.doubling as usize);
        let mut observations = Vec::with_capacity(self.params.doubling as usize);
        for sub in parent.direct_subcubes()? {
            let (arm, y) = env.draw_in_cube(&sub, rng)?;
            self.tree.record_sample(arm.clone(), y);
            arms.push(arm);
            observations.push(y);
        }
        self.zoom_refine()?;
        Ok(TraceRow {
            t: self.episode,
            kind: RowKind::Episode,
            cube: parent,
            arms,
            observations,
            n_cubes: self.tree.nodes().len(),
            min_cube_measure: self.min_cube_measure(),
        })
    }
}

/// Runs Bandit-BMO-Z: warm-up followed by `params.horizon` episodes. The
/// trace's final partition snapshot is the parent-cube partition.
pub fn run(
    params: IndexParams,
    alpha: f64,
    env: &EnvironmentSpec,
    seed: u64,
) -> Result<(RunTrace, CubeCollection), BanditError> {
    if env.dim() != params.dim {
        return Err(BanditError::DimensionMismatch {
            env: env.dim(),
            params: params.dim,
        });
    }
    let meta = TraceMeta {
        algo: "z".to_string(),
        env: env.name().to_string(),
        dim: params.dim,
        horizon: params.horizon,
        eps: params.eps,
        eta: params.eta,
        alpha: Some(alpha),
        noise_bound: params.noise_bound,
        seed,
        constant_value: env.constant_value(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut collection = CubeCollection::new(params, alpha)?;
    let mut rows = collection.warmup(env, &mut rng)?;
    for _ in 0..collection.params.horizon {
        rows.push(collection.play_episode(env, &mut rng)?);
    }
    let final_partition = collection.parent_cubes();
    Ok((
        RunTrace {
            meta,
            rows,
            final_partition,
        },
        collection,
    ))
}
