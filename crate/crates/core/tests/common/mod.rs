//! Generators shared by the integration tests.
#![allow(dead_code)]

use caltrace::conflict::{
    extract_conflict_sets, gen_chain, gen_er_graph, ChainTopology, Fixture, Shape,
};
use caltrace::label::{CoiEntry, CoiUniverse, IntegrityLadder, SecurityLabel};
use caltrace::store::Store;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every universe with at most two COI sets of at most three members,
/// disjoint and overlapping.
pub fn small_universes() -> Vec<CoiUniverse> {
    let a = ["A1", "A2", "A3"];
    let b = ["B1", "B2", "B3"];
    let mut out = vec![CoiUniverse::empty()];
    for i in 1..=3 {
        out.push(CoiUniverse::new([a[..i].to_vec()]).unwrap());
        for j in 1..=3 {
            out.push(CoiUniverse::new([a[..i].to_vec(), b[..j].to_vec()]).unwrap());
            // second set shares A1 with the first
            let mut shared: Vec<&str> = vec!["A1"];
            shared.extend(&b[..j - 1]);
            if shared.len() == j {
                out.push(CoiUniverse::new([a[..i].to_vec(), shared]).unwrap());
            }
        }
    }
    out
}

/// Options for one COI position: bottom, tainted, or one member.
fn entry_options(universe: &CoiUniverse, position: usize) -> Vec<CoiEntry> {
    let mut v = vec![CoiEntry::Bottom, CoiEntry::Tainted];
    v.extend(
        universe.sets()[position]
            .members()
            .iter()
            .map(|f| CoiEntry::Member(f.clone())),
    );
    v
}

/// Every valid label over the universe and ladder.
pub fn all_labels(universe: &CoiUniverse, ladder: &IntegrityLadder) -> Vec<SecurityLabel> {
    let mut vectors: Vec<Vec<CoiEntry>> = vec![vec![]];
    for pos in 0..universe.len() {
        let opts = entry_options(universe, pos);
        vectors = vectors
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |e| {
                    let mut v = prefix.clone();
                    v.push(e.clone());
                    v
                })
            })
            .collect();
    }
    vectors
        .into_iter()
        .flat_map(|coi| (1..=ladder.levels()).map(move |r| SecurityLabel::new(coi.clone(), r)))
        .collect()
}

pub fn random_label(
    rng: &mut impl Rng,
    universe: &CoiUniverse,
    ladder: &IntegrityLadder,
) -> SecurityLabel {
    let coi = (0..universe.len())
        .map(|pos| {
            let opts = entry_options(universe, pos);
            // bottom half the time, so random subjects are often permitted
            if rng.random_bool(0.5) {
                CoiEntry::Bottom
            } else {
                opts[rng.random_range(0..opts.len())].clone()
            }
        })
        .collect();
    SecurityLabel::new(coi, rng.random_range(1..=ladder.levels()))
}

/// A random benchmark fixture: depth 1..=10, branches 1..=4, a random
/// conflict universe. Large trees are generated in the layered shape.
pub fn random_fixture(seed: u64) -> (Fixture, Store) {
    let mut r = rng(seed);
    let depth = r.random_range(1..=10usize);
    let branches = r.random_range(1..=4usize);
    let n = r.random_range(1..=10usize);
    let p = r.random_range(0.0..=1.0);
    let graph = gen_er_graph(n, p, seed).unwrap();
    let universe = extract_conflict_sets(&graph);
    let ladder = IntegrityLadder::new(r.random_range(1..=depth as u32 + 1)).unwrap();
    let mut topology = ChainTopology::new(depth, branches);
    if topology.node_count() > 200 {
        topology.shape = Shape::Layered;
    }
    let fixture = gen_chain(topology, &universe, &ladder, seed).unwrap();
    let store = fixture.into_store().unwrap();
    (fixture, store)
}
