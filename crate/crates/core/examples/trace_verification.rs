//! Recursive traceability verification over a branching hierarchy, with
//! and without memoization of shared ancestors.

use caltrace::conflict::{gen_chain, ChainTopology};
use caltrace::label::{CoiUniverse, IntegrityLadder};
use chrono::Duration;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let ladder = IntegrityLadder::new(6)?;
    let fixture = gen_chain(
        ChainTopology::layered(6, 3),
        &CoiUniverse::empty(),
        &ladder,
        1,
    )?;
    let store = fixture.into_store()?;
    let issued = fixture.reports[0].issued_at;

    let v = store.trace_verify(&fixture.leaf, issued + Duration::days(10))?;
    let w = store.trace_verify_with(&fixture.leaf, issued + Duration::days(10), false)?;
    println!(
        "{} devices; complete={}; visited {} memoized, {} path by path",
        fixture.devices.len(),
        v.complete,
        v.visited.len(),
        w.visited.len()
    );

    let late = store.trace_verify(&fixture.leaf, issued + Duration::days(400))?;
    println!(
        "a year and a bit later: complete={} failure={:?}",
        late.complete, late.failure
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
