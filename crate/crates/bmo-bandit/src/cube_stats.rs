//! Per-cube running statistics and the optimistic index `U_t = m_t + H_t + J`.
//!
//! Counts and averages are defined over the whole arm history: `n_t(q)`
//! counts every past arm inside `q`, even arms played before `q` existed.
//! To keep that definition exact under subdivision, every node stores the
//! indices of its history points; a split rebuilds child statistics by
//! filtering those indices through containment, so incremental and
//! recomputed statistics agree bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::{DyadicCube, DyadicError, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("node for cube {0} already has children")]
    AlreadySplit(String),
    #[error("no leaf of the tree matches cube {0}")]
    NoSuchLeaf(String),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
}

/// Effective bound `Psi = 2 log2(1/eta) + ln(2 T^2 / eps)`, the smallest
/// simple expression dominating both constraints the index construction
/// needs (`Psi >= 2 log2(1/eta)` and `Psi >= ln(2 T^2 / eps)`).
pub fn compute_psi(eta: f64, horizon: u64, eps: f64) -> Result<f64, StatsError> {
    if !(0.0..1.0).contains(&eta) || eta == 0.0 {
        return Err(StatsError::InvalidParameter(format!(
            "eta must lie in (0,1), got {eta}"
        )));
    }
    if !(0.0..1.0).contains(&eps) || eps == 0.0 {
        return Err(StatsError::InvalidParameter(format!(
            "eps must lie in (0,1), got {eps}"
        )));
    }
    if horizon < 1 {
        return Err(StatsError::InvalidParameter("horizon must be >= 1".into()));
    }
    let t = horizon as f64;
    Ok(2.0 * (1.0 / eta).log2() + (2.0 * t * t / eps).ln())
}

/// All index parameters of a run: horizon, confidence and resolution
/// parameters, noise bound, and the derived quantities `Psi` and `M_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    /// Number of steps (Bandit-BMO-P) or episodes (Bandit-BMO-Z).
    pub horizon: u64,
    /// Confidence parameter in (0,1).
    pub eps: f64,
    /// Resolution parameter in (0,1); lower-bounds reachable cube measures.
    pub eta: f64,
    /// Almost-sure noise bound `D_E >= 0`.
    pub noise_bound: f64,
    /// Effective bound `Psi`.
    pub psi: f64,
    /// Arm-space dimension.
    pub dim: usize,
    /// Doubling constant `M_d = 2^d`.
    pub doubling: u64,
}

impl IndexParams {
    pub fn new(
        dim: usize,
        horizon: u64,
        eps: f64,
        eta: f64,
        noise_bound: f64,
    ) -> Result<Self, StatsError> {
        if dim == 0 {
            return Err(StatsError::InvalidParameter("dimension must be >= 1".into()));
        }
        if dim >= 16 {
            return Err(StatsError::InvalidParameter(format!(
                "dimension {dim} is unreasonably large for a dyadic discretization"
            )));
        }
        if !noise_bound.is_finite() || noise_bound < 0.0 {
            return Err(StatsError::InvalidParameter(format!(
                "noise bound must be finite and >= 0, got {noise_bound}"
            )));
        }
        let psi = compute_psi(eta, horizon, eps)?;
        Ok(Self {
            horizon,
            eps,
            eta,
            noise_bound,
            psi,
            dim,
            doubling: 1u64 << dim,
        })
    }

    /// `(Psi + D_E) * sqrt(2 ln(2 T^2 / eps))` — the numerator shared by the
    /// Hoeffding-type radius, the warm-up count, and the play-count bound.
    pub fn confidence_width(&self) -> f64 {
        let t = self.horizon as f64;
        (self.psi + self.noise_bound) * (2.0 * (2.0 * t * t / self.eps).ln()).sqrt()
    }
}

/// One recorded observation: the arm played and the (noisy) reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub arm: Point,
    pub reward: f64,
}

/// A cube with its running statistics and, when split, its `M_d` children.
#[derive(Debug, Clone)]
pub struct CubeNode {
    cube: DyadicCube,
    count: u64,
    reward_sum: f64,
    point_refs: Vec<usize>,
    children: Option<Vec<CubeNode>>,
}

impl CubeNode {
    fn fresh(cube: DyadicCube) -> Self {
        Self {
            cube,
            count: 0,
            reward_sum: 0.0,
            point_refs: Vec::new(),
            children: None,
        }
    }

    pub fn cube(&self) -> &DyadicCube {
        &self.cube
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn reward_sum(&self) -> f64 {
        self.reward_sum
    }

    pub fn point_refs(&self) -> &[usize] {
        &self.point_refs
    }

    pub fn children(&self) -> Option<&[CubeNode]> {
        self.children.as_deref()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// `max(1, n_t(q))`.
pub fn effective_count(node: &CubeNode) -> u64 {
    node.count.max(1)
}

/// Empirical cube average `m_t(q)`; zero for an unobserved cube.
pub fn cube_average(node: &CubeNode) -> f64 {
    if node.count > 0 {
        node.reward_sum / node.count as f64
    } else {
        0.0
    }
}

/// Hoeffding-type radius `H_t(q) = (Psi + D_E) sqrt(2 ln(2T^2/eps)) / sqrt(max(1, n_t(q)))`.
pub fn hoeffding_radius(node: &CubeNode, params: &IndexParams) -> f64 {
    params.confidence_width() / (effective_count(node) as f64).sqrt()
}

/// Oscillation bonus `J(q) = max(0, ln(mu(q)/eta))`. Natural log throughout,
/// matching the convention that normalizes the BMO norm and the
/// John-Nirenberg constants to 1.
pub fn jn_bonus(cube: &DyadicCube, params: &IndexParams) -> f64 {
    (cube.measure() / params.eta).ln().max(0.0)
}

/// Optimistic index `U_t(q) = m_t(q) + H_t(q) + J(q)`.
pub fn ucb_index(node: &CubeNode, params: &IndexParams) -> f64 {
    cube_average(node) + hoeffding_radius(node, params) + jn_bonus(&node.cube, params)
}

/// A dyadic tree of cube statistics plus the arm history that defines them.
#[derive(Debug, Clone)]
pub struct CubeTree {
    root: CubeNode,
    history: Vec<Sample>,
}

impl CubeTree {
    pub fn new(dim: usize) -> Result<Self, StatsError> {
        Ok(Self {
            root: CubeNode::fresh(DyadicCube::root(dim)?),
            history: Vec::new(),
        })
    }

    pub fn root(&self) -> &CubeNode {
        &self.root
    }

    pub fn history(&self) -> &[Sample] {
        &self.history
    }

    pub fn dim(&self) -> usize {
        self.root.cube.dim()
    }

    /// Records one observation along the root-to-leaf containment path.
    pub fn record_sample(&mut self, arm: Point, reward: f64) {
        assert_eq!(
            arm.dim(),
            self.dim(),
            "dimension mismatch: tree is {}-d, arm is {}-d",
            self.dim(),
            arm.dim()
        );
        debug_assert!(self.root.cube.contains(&arm));
        let idx = self.history.len();
        self.history.push(Sample {
            arm: arm.clone(),
            reward,
        });
        let mut node = &mut self.root;
        loop {
            node.count += 1;
            node.reward_sum += reward;
            node.point_refs.push(idx);
            match node.children {
                Some(ref mut children) => {
                    let j = child_slot(&node.cube, &arm);
                    node = &mut children[j];
                }
                None => break,
            }
        }
    }

    /// Splits the leaf addressed by `cube`, rebuilding child statistics from
    /// the recorded history so they match the history-based definition.
    pub fn split_leaf(&mut self, cube: &DyadicCube) -> Result<(), StatsError> {
        let history = &self.history;
        let node = find_node_mut(&mut self.root, cube)
            .ok_or_else(|| StatsError::NoSuchLeaf(cube.to_string()))?;
        if node.children.is_some() {
            return Err(StatsError::AlreadySplit(cube.to_string()));
        }
        let mut children: Vec<CubeNode> = node
            .cube
            .direct_subcubes()?
            .into_iter()
            .map(CubeNode::fresh)
            .collect();
        for &idx in &node.point_refs {
            let sample = &history[idx];
            let child = &mut children[child_slot(&node.cube, &sample.arm)];
            child.count += 1;
            child.reward_sum += sample.reward;
            child.point_refs.push(idx);
        }
        node.children = Some(children);
        Ok(())
    }

    /// All childless nodes, in depth-first order.
    pub fn leaves(&self) -> Vec<&CubeNode> {
        let mut out = Vec::new();
        collect_leaves(&self.root, &mut out);
        out
    }

    /// All nodes of the tree, in depth-first order.
    pub fn nodes(&self) -> Vec<&CubeNode> {
        let mut out = Vec::new();
        collect_nodes(&self.root, &mut out);
        out
    }

    pub fn find(&self, cube: &DyadicCube) -> Option<&CubeNode> {
        find_node(&self.root, cube)
    }

    /// Count of arms among the first `upto` history entries lying in `cube`.
    /// Brute-force companion to the incremental statistics.
    pub fn brute_count(&self, cube: &DyadicCube, upto: usize) -> u64 {
        self.history[..upto.min(self.history.len())]
            .iter()
            .filter(|s| cube.contains(&s.arm))
            .count() as u64
    }

    /// Recomputes `(count, reward_sum)` for `cube` by scanning the full
    /// history in order. Matches incremental values bit for bit.
    pub fn brute_stats(&self, cube: &DyadicCube) -> (u64, f64) {
        let mut count = 0u64;
        let mut sum = 0.0;
        for s in &self.history {
            if cube.contains(&s.arm) {
                count += 1;
                sum += s.reward;
            }
        }
        (count, sum)
    }
}

/// Index of the direct sub-cube of `parent` containing `arm`: bit `i` picks
/// the upper half along axis `i`.
fn child_slot(parent: &DyadicCube, arm: &Point) -> usize {
    let k = parent.depth() + 1;
    let mut j = 0usize;
    for (i, (&m, &x)) in parent.coords().iter().zip(arm.coords()).enumerate() {
        let child_coord = crate::dyadic::axis_index(x, k);
        debug_assert!(child_coord / 2 == m);
        j |= ((child_coord & 1) as usize) << i;
    }
    j
}

fn find_node<'a>(node: &'a CubeNode, cube: &DyadicCube) -> Option<&'a CubeNode> {
    if &node.cube == cube {
        return Some(node);
    }
    if !node.cube.contains_cube(cube) {
        return None;
    }
    node.children
        .as_ref()?
        .iter()
        .find(|c| c.cube.contains_cube(cube))
        .and_then(|c| find_node(c, cube))
}

fn find_node_mut<'a>(node: &'a mut CubeNode, cube: &DyadicCube) -> Option<&'a mut CubeNode> {
    if &node.cube == cube {
        return Some(node);
    }
    if !node.cube.contains_cube(cube) {
        return None;
    }
    node.children
        .as_mut()?
        .iter_mut()
        .find(|c| c.cube.contains_cube(cube))
        .and_then(|c| find_node_mut(c, cube))
}

fn collect_leaves<'a>(node: &'a CubeNode, out: &mut Vec<&'a CubeNode>) {
    match node.children {
        Some(ref children) => children.iter().for_each(|c| collect_leaves(c, out)),
        None => out.push(node),
    }
}

fn collect_nodes<'a>(node: &'a CubeNode, out: &mut Vec<&'a CubeNode>) {
    out.push(node);
    if let Some(ref children) = node.children {
        children.iter().for_each(|c| collect_nodes(c, out));
    }
}
