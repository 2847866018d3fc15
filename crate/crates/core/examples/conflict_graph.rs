//! Conflict graphs: G(n, p), maximal cliques as COI sets, and universes
//! with a single set of a chosen size.

use caltrace::conflict::{
    extract_conflict_sets, gen_conflict_sized_universe, gen_er_graph, maximal_cliques,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let g = gen_er_graph(8, 0.4, 42)?;
    println!("G(8, 0.4) seed 42: {} edges", g.edges().len());
    for clique in maximal_cliques(&g) {
        println!("  maximal clique {clique:?}");
    }
    let universe = extract_conflict_sets(&g);
    println!(
        "COI sets (size >= 2): {}",
        serde_json::to_string(&universe)?
    );

    for size in [1, 2, 10, 50] {
        let s = gen_conflict_sized_universe(size, 7)?;
        let got = s.universe.sets().first().map_or(1, |set| set.len());
        println!(
            "target {size:>2}: n={:<3} p={:.4} seed={} -> set of {got}",
            s.n, s.p, s.graph_seed
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
