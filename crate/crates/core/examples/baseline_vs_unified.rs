//! The same requests under the unified engine and the three-policy
//! baseline: identical outcomes, different reasons and cost.

use caltrace::conflict::{extract_conflict_sets, gen_chain, gen_er_graph, ChainTopology};
use caltrace::label::{make_bottom, IntegrityLadder};
use caltrace::{AccessRequest, Engine, RequestTarget};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let universe = extract_conflict_sets(&gen_er_graph(10, 0.3, 4)?);
    let ladder = IntegrityLadder::new(30)?;
    let fixture = gen_chain(ChainTopology::new(30, 1), &universe, &ladder, 4)?;
    let store = fixture.into_store()?;

    let subjects = [
        ("verifier", fixture.verifier.label.clone()),
        ("bottom", make_bottom(&universe, &ladder)),
    ];
    for (name, label) in subjects {
        let request = AccessRequest {
            request_id: name.into(),
            subject_id: name.into(),
            subject_label: label,
            target: RequestTarget::VerifyChain(fixture.leaf.clone()),
            as_of: None,
        };
        for engine in [Engine::unified(), Engine::baseline()] {
            let mut best = u128::MAX;
            let mut decision = None;
            for _ in 0..200 {
                let d = engine.timed_evaluate(&request, &store)?;
                best = best.min(d.evaluation_time.as_nanos());
                decision = Some(d);
            }
            let d = decision.unwrap();
            println!(
                "{name:<9} {:<9} {:?} in {best}ns",
                engine.mode().as_str(),
                d.outcome
            );
            if let Some(reason) = d.reason {
                println!("          reason {}", serde_json::to_string(&reason)?);
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
