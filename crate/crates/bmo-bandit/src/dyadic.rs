//! Dyadic cube geometry of the arm space `[0,1)^d`.
//!
//! A dyadic cube at depth `k` with integer coordinates `m = (m_1, ..., m_d)`
//! is the half-open product `Π_i [m_i 2^-k, (m_i + 1) 2^-k)`. Two distinct
//! dyadic cubes are either disjoint or nested, which is what makes them
//! usable as an adaptive discretization: containment and subdivision are
//! decidable exactly on the integer addresses, never on floating endpoints.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Hard cap on refinement depth per axis. Integer addresses stay within
/// `u64` and measures within normal `f64` range far below this.
pub const MAX_DEPTH: u32 = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DyadicError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("depth {0} exceeds the maximum supported depth {MAX_DEPTH}")]
    DepthOverflow(u32),
    #[error("invalid cube address `{address}`: {reason}")]
    BadAddress { address: String, reason: String },
    #[error("point coordinate {value} outside [0,1)")]
    PointOutOfRange { value: f64 },
    #[error("point has dimension 0")]
    EmptyPoint,
}

/// A point of the arm space `[0,1)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    /// Builds a point, rejecting coordinates outside `[0,1)`.
    pub fn new(coords: Vec<f64>) -> Result<Self, DyadicError> {
        if coords.is_empty() {
            return Err(DyadicError::EmptyPoint);
        }
        for &c in &coords {
            if !(0.0..1.0).contains(&c) {
                return Err(DyadicError::PointOutOfRange { value: c });
            }
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Point {
    type Err = DyadicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let coords = s
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| DyadicError::BadAddress {
                    address: s.to_string(),
                    reason: format!("bad coordinate `{tok}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Point::new(coords)
    }
}

/// How two dyadic cubes relate. Distinct dyadic cubes never partially
/// overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeRelation {
    Equal,
    /// `self` strictly contains the other cube.
    Contains,
    /// `self` is strictly contained in the other cube.
    Inside,
    Disjoint,
}

/// Address of a half-open dyadic cube of `[0,1)^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    // Ordering derives as (depth, coords) lexicographic, which is the
    // deterministic tie-break order used by the selection rules.
    depth: u32,
    coords: Vec<u64>,
}

/// Exact `floor(x * 2^k)` for `x` in `[0,1)` and `k <= 60`, computed on the
/// bit representation so that half-open boundaries never misclassify.
pub(crate) fn axis_index(x: f64, k: u32) -> u64 {
    debug_assert!((0.0..1.0).contains(&x));
    if x == 0.0 {
        return 0;
    }
    let bits = x.to_bits();
    let exp_field = (bits >> 52) & 0x7ff;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if exp_field == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1u64 << 52), exp_field as i64 - 1075)
    };
    // x * 2^k = mant * 2^(exp + k); x < 1 keeps the integer part below 2^k.
    let shift = exp + i64::from(k);
    if shift >= 0 {
        mant << shift
    } else if shift <= -64 {
        0
    } else {
        mant >> (-shift)
    }
}

impl DyadicCube {
    /// The root cube `[0,1)^d`.
    pub fn root(dim: usize) -> Result<Self, DyadicError> {
        if dim == 0 {
            return Err(DyadicError::ZeroDimension);
        }
        Ok(Self {
            depth: 0,
            coords: vec![0; dim],
        })
    }

    pub fn new(depth: u32, coords: Vec<u64>) -> Result<Self, DyadicError> {
        if coords.is_empty() {
            return Err(DyadicError::ZeroDimension);
        }
        if depth > MAX_DEPTH {
            return Err(DyadicError::DepthOverflow(depth));
        }
        let bound = 1u64 << depth;
        for &m in &coords {
            if m >= bound {
                return Err(DyadicError::BadAddress {
                    address: format!("{depth}:{coords:?}"),
                    reason: format!("coordinate {m} not below 2^{depth}"),
                });
            }
        }
        Ok(Self { depth, coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn coords(&self) -> &[u64] {
        &self.coords
    }

    /// Edge length `2^-k`.
    pub fn edge_len(&self) -> f64 {
        2f64.powi(-(self.depth as i32))
    }

    /// Lebesgue measure `2^-dk`. Exact: a power of two.
    pub fn measure(&self) -> f64 {
        2f64.powi(-((self.dim() as i32) * (self.depth as i32)))
    }

    /// Lower endpoint of the cube along `axis`.
    pub fn lower(&self, axis: usize) -> f64 {
        self.coords[axis] as f64 * self.edge_len()
    }

    /// The `2^d` depth-`k+1` cubes partitioning this cube. Child `j` takes
    /// bit `i` of `j` as the half chosen along axis `i`.
    pub fn direct_subcubes(&self) -> Result<Vec<DyadicCube>, DyadicError> {
        if self.depth >= MAX_DEPTH {
            return Err(DyadicError::DepthOverflow(self.depth + 1));
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(1 << d);
        for j in 0..(1u64 << d) {
            let coords = self
                .coords
                .iter()
                .enumerate()
                .map(|(i, &m)| 2 * m + ((j >> i) & 1))
                .collect();
            out.push(DyadicCube {
                depth: self.depth + 1,
                coords,
            });
        }
        Ok(out)
    }

    /// The depth-`k-1` cube containing this one, or `None` at the root.
    pub fn direct_supercube(&self) -> Option<DyadicCube> {
        if self.depth == 0 {
            return None;
        }
        Some(DyadicCube {
            depth: self.depth - 1,
            coords: self.coords.iter().map(|&m| m / 2).collect(),
        })
    }

    /// Membership of a point, exact at the half-open boundaries.
    pub fn contains(&self, p: &Point) -> bool {
        assert_eq!(
            self.dim(),
            p.dim(),
            "dimension mismatch: cube is {}-d, point is {}-d",
            self.dim(),
            p.dim()
        );
        self.coords
            .iter()
            .zip(p.coords())
            .all(|(&m, &x)| axis_index(x, self.depth) == m)
    }

    /// Whether `self` contains `other` (possibly equal).
    pub fn contains_cube(&self, other: &DyadicCube) -> bool {
        if self.dim() != other.dim() || self.depth > other.depth {
            return false;
        }
        let shift = other.depth - self.depth;
        self.coords
            .iter()
            .zip(&other.coords)
            .all(|(&m, &m2)| m2 >> shift == m)
    }

    /// Nesting trichotomy: equal, nested one way or the other, or disjoint.
    pub fn relation(&self, other: &DyadicCube) -> CubeRelation {
        if self == other {
            CubeRelation::Equal
        } else if self.contains_cube(other) {
            CubeRelation::Contains
        } else if other.contains_cube(self) {
            CubeRelation::Inside
        } else {
            CubeRelation::Disjoint
        }
    }

    /// The unique depth-`k` dyadic cube containing `p`.
    pub fn containing(p: &Point, depth: u32) -> Result<DyadicCube, DyadicError> {
        if depth > MAX_DEPTH {
            return Err(DyadicError::DepthOverflow(depth));
        }
        Ok(DyadicCube {
            depth,
            coords: p.coords().iter().map(|&x| axis_index(x, depth)).collect(),
        })
    }

    /// Uniform draw from the cube; hits any measurable `S` inside with
    /// probability `mu(S)/mu(cube)` and is reproducible from the rng state.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let len = self.edge_len();
        let coords = self
            .coords
            .iter()
            .map(|&m| {
                let lo = m as f64 * len;
                let hi = (m + 1) as f64 * len;
                let u: f64 = rng.gen();
                // lo + u*len can round onto the excluded upper face; clamp
                // back into the half-open interval.
                let x = lo + u * len;
                if x >= hi {
                    f64::next_down(hi)
                } else {
                    x
                }
            })
            .collect();
        Point { coords }
    }
}

/// Checks that `cubes` is an exact partition of `[0,1)^d`: pairwise
/// disjoint with measures summing to exactly 1.
///
/// Disjointness uses that two dyadic cubes overlap iff one contains the
/// other, so it suffices that no cube is an ancestor (or duplicate) of
/// another. The measure sum is taken in integer arithmetic at the deepest
/// cube's scale whenever that fits in a `u128`, making the "exactly 1"
/// claim literal rather than a float comparison.
pub fn verify_exact_partition(cubes: &[DyadicCube]) -> Result<(), String> {
    let first = cubes.first().ok_or("empty cube collection")?;
    let d = first.dim();
    if cubes.iter().any(|c| c.dim() != d) {
        return Err("mixed dimensions".to_string());
    }
    let set: std::collections::HashSet<&DyadicCube> = cubes.iter().collect();
    if set.len() != cubes.len() {
        return Err("duplicate cube".to_string());
    }
    for cube in cubes {
        let mut up = cube.direct_supercube();
        while let Some(anc) = up {
            if set.contains(&anc) {
                return Err(format!("cube {cube} overlaps its ancestor {anc}"));
            }
            up = anc.direct_supercube();
        }
    }
    let k_max = cubes.iter().map(|c| c.depth()).max().unwrap();
    let scale = k_max as u128 * d as u128;
    if scale <= 120 {
        let total: u128 = cubes
            .iter()
            .map(|c| 1u128 << (scale - c.depth() as u128 * d as u128))
            .sum();
        if total != 1u128 << scale {
            return Err(format!(
                "measures sum to {total}/2^{scale}, not 1"
            ));
        }
    } else {
        // Beyond u128 range (depth*dim > 120); unreachable for any eta the
        // algorithms accept. Fall back to the float sum.
        let total: f64 = cubes.iter().map(|c| c.measure()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("measures sum to {total}, not 1"));
        }
    }
    Ok(())
}

/// Whether every cube of `finer` is contained in some cube of `coarser` —
/// the refinement-monotonicity premise of the point-scattering bound.
pub fn partition_is_finer(finer: &[DyadicCube], coarser: &[DyadicCube]) -> bool {
    let set: std::collections::HashSet<&DyadicCube> = coarser.iter().collect();
    finer.iter().all(|cube| {
        let mut cur = Some(cube.clone());
        while let Some(c) = cur {
            if set.contains(&c) {
                return true;
            }
            cur = c.direct_supercube();
        }
        false
    })
}

impl fmt::Display for DyadicCube {
    /// Textual address `k:m1,m2,...,md` used in traces.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.depth)?;
        for (i, m) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

impl FromStr for DyadicCube {
    type Err = DyadicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| DyadicError::BadAddress {
            address: s.to_string(),
            reason: reason.to_string(),
        };
        let (depth_s, coords_s) = s.split_once(':').ok_or_else(|| bad("missing `:`"))?;
        let depth: u32 = depth_s
            .trim()
            .parse()
            .map_err(|_| bad("depth is not an integer"))?;
        let coords = coords_s
            .split(',')
            .map(|tok| tok.trim().parse::<u64>().map_err(|_| bad("bad coordinate")))
            .collect::<Result<Vec<_>, _>>()?;
        DyadicCube::new(depth, coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn root_basics() {
        let r2 = DyadicCube::root(2).unwrap();
        assert_eq!(r2.measure(), 1.0);
        assert_eq!(r2.depth(), 0);
        let r1 = DyadicCube::root(1).unwrap();
        assert_eq!(r1.edge_len(), 1.0);
        let r3 = DyadicCube::root(3).unwrap();
        assert_eq!(r3.measure(), 1.0);
        assert_eq!(r3.direct_subcubes().unwrap().len(), 8);
        assert_eq!(DyadicCube::root(0), Err(DyadicError::ZeroDimension));
    }

    #[test]
    fn subcubes_of_unit_square() {
        let subs = DyadicCube::root(2).unwrap().direct_subcubes().unwrap();
        let addrs: Vec<String> = subs.iter().map(|c| c.to_string()).collect();
        assert_eq!(addrs, vec!["1:0,0", "1:1,0", "1:0,1", "1:1,1"]);
        let total: f64 = subs.iter().map(|c| c.measure()).sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn subcubes_of_half_interval() {
        let left = "1:0".parse::<DyadicCube>().unwrap();
        let subs = left.direct_subcubes().unwrap();
        assert_eq!(subs[0].to_string(), "2:0"); // [0, .25)
        assert_eq!(subs[1].to_string(), "2:1"); // [.25, .5)
        assert_eq!(subs[0].measure() + subs[1].measure(), left.measure());
    }

    #[test]
    fn supercube_inverse() {
        let q = "3:5".parse::<DyadicCube>().unwrap();
        for sub in q.direct_subcubes().unwrap() {
            assert_eq!(sub.direct_supercube().unwrap(), q);
        }
        assert_eq!("2:1".parse::<DyadicCube>().unwrap().direct_supercube().unwrap().to_string(), "1:0");
        assert!(DyadicCube::root(1).unwrap().direct_supercube().is_none());
    }

    #[test]
    fn containment_half_open() {
        let q = "1:0,0".parse::<DyadicCube>().unwrap(); // [0,.5)^2
        assert!(q.contains(&Point::new(vec![0.25, 0.25]).unwrap()));
        assert!(!q.contains(&Point::new(vec![0.5, 0.25]).unwrap()));
        let root = DyadicCube::root(2).unwrap();
        assert!(root.contains(&Point::new(vec![0.0, 0.999_999]).unwrap()));
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn containment_dim_mismatch_panics() {
        let q = DyadicCube::root(2).unwrap();
        q.contains(&Point::new(vec![0.5]).unwrap());
    }

    #[test]
    fn measures() {
        let q = DyadicCube::new(3, vec![1, 2]).unwrap();
        assert_eq!(q.measure(), 1.0 / 64.0);
        assert_eq!(DyadicCube::root(5).unwrap().measure(), 1.0);
        assert_eq!(DyadicCube::new(10, vec![7]).unwrap().measure(), 2f64.powi(-10));
    }

    #[test]
    fn depth_cap() {
        let mut q = DyadicCube::root(1).unwrap();
        for _ in 0..MAX_DEPTH {
            q = q.direct_subcubes().unwrap().into_iter().next().unwrap();
        }
        assert_eq!(q.depth(), MAX_DEPTH);
        assert_eq!(q.direct_subcubes(), Err(DyadicError::DepthOverflow(MAX_DEPTH + 1)));
    }

    #[test]
    fn sampling_is_deterministic_and_contained() {
        let q = "2:1,2".parse::<DyadicCube>().unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a = q.sample_uniform(&mut r1);
            let b = q.sample_uniform(&mut r2);
            assert_eq!(a, b);
            assert!(q.contains(&a));
        }
    }

    #[test]
    fn sampling_binomial_fraction() {
        // 1e5 draws in [0,.5)^2; the fraction landing in [0,.25)^2 is
        // 0.25 within 3 binomial sigmas (frozen margin 0.004108).
        let outer = "1:0,0".parse::<DyadicCube>().unwrap();
        let inner = "2:0,0".parse::<DyadicCube>().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| inner.contains(&outer.sample_uniform(&mut rng)))
            .count();
        let frac = hits as f64 / n as f64;
        // 3 * sqrt(0.25 * 0.75 / 1e5) = 0.0041079
        assert!((frac - 0.25).abs() < 0.004_107_92, "frac={frac}");
    }

    #[test]
    fn sampling_axis_uniformity() {
        // Chi-square goodness of fit over 16 bins per axis at desk scale.
        let q = DyadicCube::root(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 160_000usize;
        let mut bins = [0u64; 16];
        for _ in 0..n {
            let p = q.sample_uniform(&mut rng);
            bins[(p.coords()[0] * 16.0) as usize] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = bins.iter().map(|&b| (b as f64 - expected).powi(2) / expected).sum();
        // 15 dof, 99.9th percentile is 37.7.
        assert!(chi2 < 37.7, "chi2={chi2}");
    }

    #[test]
    fn partition_verification() {
        let root = DyadicCube::root(2).unwrap();
        assert!(verify_exact_partition(std::slice::from_ref(&root)).is_ok());
        let subs = root.direct_subcubes().unwrap();
        assert!(verify_exact_partition(&subs).is_ok());
        // Mixed depths still sum exactly.
        let mut mixed = subs.clone();
        let last = mixed.pop().unwrap();
        mixed.extend(last.direct_subcubes().unwrap());
        assert!(verify_exact_partition(&mixed).is_ok());
        // A missing cube or an overlapping ancestor is caught.
        assert!(verify_exact_partition(&mixed[1..]).is_err());
        let mut overlapping = mixed.clone();
        overlapping.push(root.clone());
        assert!(verify_exact_partition(&overlapping).is_err());
        // Finer-than relation.
        assert!(partition_is_finer(&mixed, &subs));
        assert!(partition_is_finer(&subs, &[root]));
        assert!(!partition_is_finer(&subs, &mixed));
    }

    #[test]
    fn address_round_trip() {
        for s in ["0:0", "3:5", "2:1,3", "10:1023,0"] {
            let q: DyadicCube = s.parse().unwrap();
            assert_eq!(q.to_string(), s);
        }
        assert!("2:4".parse::<DyadicCube>().is_err()); // coord not below 2^2
        assert!("x:1".parse::<DyadicCube>().is_err());
        assert!("1".parse::<DyadicCube>().is_err());
        assert!("61:0".parse::<DyadicCube>().is_err());
    }

    fn arb_cube(dim: usize) -> impl Strategy<Value = DyadicCube> {
        (0u32..=8).prop_flat_map(move |depth| {
            proptest::collection::vec(0u64..(1u64 << depth), dim)
                .prop_map(move |coords| DyadicCube::new(depth, coords).unwrap())
        })
    }

    proptest! {
        #[test]
        fn partition_closure(q in arb_cube(2)) {
            let subs = q.direct_subcubes().unwrap();
            prop_assert_eq!(subs.len(), 4);
            let total: f64 = subs.iter().map(|c| c.measure()).sum();
            prop_assert_eq!(total, q.measure());
            for (i, a) in subs.iter().enumerate() {
                prop_assert!(q.contains_cube(a));
                prop_assert_eq!(a.edge_len() * 2.0, q.edge_len());
                for b in &subs[i + 1..] {
                    prop_assert_eq!(a.relation(b), CubeRelation::Disjoint);
                }
            }
        }

        #[test]
        fn nesting_trichotomy(a in arb_cube(2), b in arb_cube(2)) {
            let rel = a.relation(&b);
            let flipped = b.relation(&a);
            match rel {
                CubeRelation::Equal => prop_assert_eq!(flipped, CubeRelation::Equal),
                CubeRelation::Contains => prop_assert_eq!(flipped, CubeRelation::Inside),
                CubeRelation::Inside => prop_assert_eq!(flipped, CubeRelation::Contains),
                CubeRelation::Disjoint => prop_assert_eq!(flipped, CubeRelation::Disjoint),
            }
        }

        #[test]
        fn samples_stay_inside(q in arb_cube(3), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..32 {
                prop_assert!(q.contains(&q.sample_uniform(&mut rng)));
            }
        }

        #[test]
        fn display_parse_round_trip(q in arb_cube(2)) {
            let parsed: DyadicCube = q.to_string().parse().unwrap();
            prop_assert_eq!(parsed, q);
        }

        #[test]
        fn axis_index_matches_interval(x in 0f64..1f64, k in 0u32..=20) {
            let m = axis_index(x, k);
            let len = 2f64.powi(-(k as i32));
            prop_assert!(m as f64 * len <= x);
            prop_assert!(x < (m + 1) as f64 * len);
        }
    }
}
