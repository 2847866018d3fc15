//! Benchmark inputs: random conflict graphs, the COI universes their
//! maximal cliques induce, and traceability-chain fixtures.
//!
//! All generators are pure functions of their parameters and a `u64` seed.
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`; the exact draw
//! procedure is fixed (see [`PRNG`]) so fixtures can be regenerated by other
//! implementations.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{DeviceId, FacilityId, ReportId};
use crate::label::{CoiUniverse, IntegrityLadder, SecurityLabel};
use crate::store::{CalibrationReport, CalibrationRequest, Payload, Store, StoreError, Technician};

/// Name and draw procedure recorded in every fixture manifest.
pub const PRNG: &str = "chacha8 seed_from_u64; bernoulli(p): (next_u64>>11)*2^-53 < p; \
                        choice(k): next_u64 % k";

/// Largest tree fixture accepted by [`gen_chain`].
pub const MAX_TREE_NODES: u64 = 1 << 20;

/// Facility that belongs to no COI set.
pub const INDEPENDENT_FACILITY: &str = "IND";
pub const ROOT_FACILITY: &str = "NMI";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("edge probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("conflict set size must be at least 1")]
    InvalidTarget,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("fixture I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture manifest: {0}")]
    Json(#[from] serde_json::Error),
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    ((rng.next_u64() >> 11) as f64) * (1.0 / (1u64 << 53) as f64) < p
}

fn choice(rng: &mut ChaCha8Rng, k: usize) -> usize {
    (rng.next_u64() % k as u64) as usize
}

pub fn facility_name(node: usize) -> FacilityId {
    FacilityId::new(format!("F{node}"))
}

/// Undirected conflict graph over facilities `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    seed: u64,
    p: f64,
}

impl ConflictGraph {
    /// Graph from an explicit edge list. Pairs are normalized to `(lo, hi)`;
    /// self-loops and out-of-range endpoints are rejected.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GenError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(GenError::InvalidTopology(format!("bad edge ({a}, {b})")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            n,
            edges: set,
            seed: 0,
            p: f64::NAN,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn probability(&self) -> f64 {
        self.p
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    fn adjacency(&self) -> Vec<Bits> {
        let mut adj = vec![Bits::new(self.n); self.n];
        for &(a, b) in &self.edges {
            adj[a].insert(b);
            adj[b].insert(a);
        }
        adj
    }
}

/// G(n, p): every unordered pair `(i, j)`, `i < j`, visited in lexicographic
/// order and kept with probability `p`.
pub fn gen_er_graph(n: usize, p: f64, seed: u64) -> Result<ConflictGraph, GenError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GenError::InvalidProbability(p));
    }
    let mut rng = rng(seed);
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if bernoulli(&mut rng, p) {
                edges.insert((i, j));
            }
        }
    }
    Ok(ConflictGraph { n, edges, seed, p })
}

#[derive(Clone, Debug)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn full(n: usize) -> Self {
        let mut b = Self::new(n);
        for i in 0..n {
            b.insert(i);
        }
        b
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn remove(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    fn is_empty(&self) -> bool {
        self.0.iter().all(|w| *w == 0)
    }

    fn and(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn and_not(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & !b).collect())
    }

    fn or(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a | b).collect())
    }

    fn count_and(&self, other: &Bits) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let bit = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(w * 64 + bit)
            })
        })
    }
}

/// Every maximal clique (isolated nodes included as singletons), members
/// ascending, cliques in lexicographic order. Bron-Kerbosch with Tomita
/// pivoting.
pub fn maximal_cliques(graph: &ConflictGraph) -> Vec<Vec<usize>> {
    fn expand(
        r: &mut Vec<usize>,
        mut p: Bits,
        mut x: Bits,
        adj: &[Bits],
        out: &mut Vec<Vec<usize>>,
    ) {
        if p.is_empty() {
            if x.is_empty() {
                let mut clique = r.clone();
                clique.sort_unstable();
                out.push(clique);
            }
            return;
        }
        let pivot = p
            .or(&x)
            .iter()
            .max_by_key(|&u| p.count_and(&adj[u]))
            .expect("p is nonempty");
        let candidates: Vec<usize> = p.and_not(&adj[pivot]).iter().collect();
        for v in candidates {
            r.push(v);
            expand(r, p.and(&adj[v]), x.and(&adj[v]), adj, out);
            r.pop();
            p.remove(v);
            x.insert(v);
        }
    }

    let n = graph.node_count();
    if n == 0 {
        return Vec::new();
    }
    let adj = graph.adjacency();
    let mut out = Vec::new();
    expand(&mut Vec::new(), Bits::full(n), Bits::new(n), &adj, &mut out);
    out.sort();
    out
}

/// COI universe whose sets are the maximal cliques of size two or more,
/// ordered lexicographically by member node. Facility `i` is named `F{i}`.
pub fn extract_conflict_sets(graph: &ConflictGraph) -> CoiUniverse {
    let sets: Vec<Vec<FacilityId>> = maximal_cliques(graph)
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| c.into_iter().map(facility_name).collect())
        .collect();
    CoiUniverse::new(sets).expect("cliques are nonempty")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Every non-root node has `branches` parents of its own:
    /// `branches^d` nodes at level `d`.
    #[default]
    Tree,
    /// One leaf, then `branches` nodes per level; each node lists every node
    /// of the next level as a parent, so ancestors are shared.
    Layered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTopology {
    /// Levels from the field device (level 0) to the roots.
    pub depth: usize,
    /// Parents per non-root node.
    pub branches: usize,
    #[serde(default)]
    pub shape: Shape,
}

impl ChainTopology {
    pub fn new(depth: usize, branches: usize) -> Self {
        Self {
            depth,
            branches,
            shape: Shape::Tree,
        }
    }

    pub fn layered(depth: usize, branches: usize) -> Self {
        Self {
            depth,
            branches,
            shape: Shape::Layered,
        }
    }

    fn level_width(&self, level: usize) -> u64 {
        match (self.shape, level) {
            (_, 0) => 1,
            (Shape::Tree, d) => (self.branches as u64).saturating_pow(d as u32),
            (Shape::Layered, _) => self.branches as u64,
        }
    }

    /// Number of devices in the fixture (saturating).
    pub fn node_count(&self) -> u64 {
        (0..self.depth).fold(0u64, |acc, d| acc.saturating_add(self.level_width(d)))
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.depth == 0 {
            return Err(GenError::InvalidTopology("depth must be at least 1".into()));
        }
        if self.branches == 0 {
            return Err(GenError::InvalidTopology(
                "branches must be at least 1".into(),
            ));
        }
        if self.node_count() > MAX_TREE_NODES {
            return Err(GenError::InvalidTopology(format!(
                "{} levels with {} branches is {} devices (limit {MAX_TREE_NODES}); use the layered shape",
                self.depth,
                self.branches,
                self.node_count()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureDevice {
    pub device_id: DeviceId,
    pub kind: String,
}

/// A generated calibration hierarchy, replayable into a fresh store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub params: ChainTopology,
    pub seed: u64,
    pub prng: String,
    pub universe: CoiUniverse,
    pub ladder: IntegrityLadder,
    pub devices: Vec<FixtureDevice>,
    /// Roots first, so every parent is calibrated before its children.
    pub reports: Vec<CalibrationReport>,
    /// The field device at level 0.
    pub leaf: DeviceId,
    /// A technician whose label is the join of every report label at rank 1;
    /// it may verify the whole chain.
    pub verifier: Technician,
}

/// Fixed issue time of generated reports.
pub fn fixture_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
}

fn device_name(level: usize, index: u64) -> DeviceId {
    DeviceId::new(format!("L{level:02}-{index}"))
}

/// Builds a fixture for `topology`. The leaf is calibrated at rank 1 and
/// ranks rise one per level toward the roots, which sit at rank `q` (ranks
/// are clamped to the ladder). Non-root technicians work at a facility drawn
/// from the universe plus one independent facility; roots are NMI reports
/// with all-bottom labels.
pub fn gen_chain(
    topology: ChainTopology,
    universe: &CoiUniverse,
    ladder: &IntegrityLadder,
    seed: u64,
) -> Result<Fixture, GenError> {
    topology.validate()?;
    let mut rng = rng(seed);
    let mut pool = universe.facilities();
    pool.push(FacilityId::new(INDEPENDENT_FACILITY));
    let depth = topology.depth;
    let issued_at = fixture_epoch();
    let expires_at = issued_at + Duration::days(365);

    // labels are drawn leaf first so a seed fixes the same chain regardless
    // of insertion order
    let mut levels: Vec<Vec<(DeviceId, Technician, Vec<DeviceId>)>> = Vec::with_capacity(depth);
    for level in 0..depth {
        let is_root = level + 1 == depth;
        let rank = if is_root {
            ladder.root_rank()
        } else {
            ladder.clamp(level as u32 + 1)
        };
        let mut nodes = Vec::new();
        for index in 0..topology.level_width(level) {
            let parents: Vec<DeviceId> = if is_root {
                Vec::new()
            } else {
                match topology.shape {
                    Shape::Tree => (0..topology.branches as u64)
                        .map(|k| device_name(level + 1, index * topology.branches as u64 + k))
                        .collect(),
                    Shape::Layered => (0..topology.branches as u64)
                        .map(|k| device_name(level + 1, k))
                        .collect(),
                }
            };
            let facility = if is_root {
                FacilityId::new(ROOT_FACILITY)
            } else {
                pool[choice(&mut rng, pool.len())].clone()
            };
            let technician =
                Technician::at_facility(format!("T-{facility}"), facility, rank, universe, ladder)?;
            nodes.push((device_name(level, index), technician, parents));
        }
        levels.push(nodes);
    }

    let mut verifier_label = SecurityLabel::bottom(universe, ladder).with_rank(1);
    let mut devices = Vec::new();
    let mut reports = Vec::new();
    for (level, nodes) in levels.into_iter().enumerate().rev() {
        for (device_id, technician, parents) in nodes {
            verifier_label = verifier_label
                .join(&technician.label)
                .expect("same universe");
            devices.push(FixtureDevice {
                device_id: device_id.clone(),
                kind: if level == 0 {
                    "field device".into()
                } else {
                    format!("reference level {level}")
                },
            });
            reports.push(CalibrationReport {
                report_id: ReportId::new(format!("{device_id}/1")),
                device_id,
                technician_id: technician.technician_id,
                facility_id: technician.facility_id,
                label: technician.label,
                parents,
                issued_at,
                expires_at,
                payload: Payload::new(),
            });
        }
    }
    let verifier = Technician::new("verifier", "AUDIT", verifier_label, universe, ladder)?;
    Ok(Fixture {
        params: topology,
        seed,
        prng: PRNG.into(),
        universe: universe.clone(),
        ladder: *ladder,
        devices,
        reports,
        leaf: device_name(0, 0),
        verifier,
    })
}

impl Fixture {
    /// Replays the fixture through the store's lifecycle checks.
    pub fn into_store(&self) -> Result<Store, GenError> {
        let mut store = Store::in_memory(self.universe.clone(), self.ladder);
        self.load_into(&mut store)?;
        Ok(store)
    }

    pub fn load_into(&self, store: &mut Store) -> Result<(), GenError> {
        for d in &self.devices {
            store.register_device(d.device_id.clone(), d.kind.clone())?;
        }
        for r in &self.reports {
            let technician = Technician {
                technician_id: r.technician_id.clone(),
                facility_id: r.facility_id.clone(),
                label: r.label.clone(),
            };
            store.initial_calibration(CalibrationRequest {
                device_id: r.device_id.clone(),
                technician,
                parents: r.parents.clone(),
                issued_at: r.issued_at,
                expires_at: r.expires_at,
                payload: r.payload.clone(),
            })?;
        }
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), GenError> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self, GenError> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// A universe holding a single COI set of an exact size, and the graph
/// parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizedUniverse {
    pub target_size: usize,
    pub universe: CoiUniverse,
    pub n: usize,
    pub p: f64,
    pub graph_seed: u64,
}

/// Grows the competitor count `n` and the conflict probability `p` until
/// G(n, p) has a maximal clique of exactly `target_size` members, and
/// returns that clique as the only COI set.
///
/// `p` is scheduled so the complement graph expects only a handful of
/// missing edges, which keeps clique enumeration cheap up to size 50 and
/// beyond. If no draw hits the target the generator falls back to the
/// complete graph on `target_size` nodes. Size 1 is an isolated facility:
/// no COI set at all.
pub fn gen_conflict_sized_universe(
    target_size: usize,
    seed: u64,
) -> Result<SizedUniverse, GenError> {
    if target_size == 0 {
        return Err(GenError::InvalidTarget);
    }
    if target_size == 1 {
        return Ok(SizedUniverse {
            target_size,
            universe: CoiUniverse::empty(),
            n: 1,
            p: 0.0,
            graph_seed: seed,
        });
    }
    let mut attempt = 0u64;
    for extra in 1..=3usize {
        let n = target_size + extra;
        let pairs = (n * (n - 1) / 2) as f64;
        for missing in [4.0, 3.0, 2.0, 1.0] {
            let p = (1.0 - missing / pairs).max(0.0);
            for _ in 0..4 {
                let graph_seed = seed.wrapping_add(attempt);
                attempt += 1;
                let graph = gen_er_graph(n, p, graph_seed)?;
                if let Some(clique) = maximal_cliques(&graph)
                    .into_iter()
                    .find(|c| c.len() == target_size)
                {
                    let set: Vec<FacilityId> = clique.into_iter().map(facility_name).collect();
                    return Ok(SizedUniverse {
                        target_size,
                        universe: CoiUniverse::new([set]).expect("nonempty"),
                        n,
                        p,
                        graph_seed,
                    });
                }
            }
        }
    }
    let graph = gen_er_graph(target_size, 1.0, seed)?;
    Ok(SizedUniverse {
        target_size,
        universe: extract_conflict_sets(&graph),
        n: target_size,
        p: 1.0,
        graph_seed: seed,
    })
}
