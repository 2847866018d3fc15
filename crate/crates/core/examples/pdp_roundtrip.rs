//! Decision service on an ephemeral port, queried through the enforcement
//! point client.

use std::time::Duration;

use caltrace::conflict::{extract_conflict_sets, gen_chain, gen_er_graph, ChainTopology};
use caltrace::label::IntegrityLadder;
use caltrace::pdp::{self, PepClient, WireRequest, WireSubject};
use caltrace::policy::Action;
use caltrace::EngineMode;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let universe = extract_conflict_sets(&gen_er_graph(6, 0.5, 3)?);
    let ladder = IntegrityLadder::new(5)?;
    let fixture = gen_chain(ChainTopology::new(5, 2), &universe, &ladder, 3)?;
    let store = fixture.into_store()?.into_shared();

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let svc = pdp::spawn(
            store,
            EngineMode::Unified,
            Duration::from_secs(1),
            "127.0.0.1:0",
        )
        .await?;
        println!("listening on {}", svc.endpoint());
        let pep = PepClient::new(svc.endpoint(), Duration::from_secs(2));
        println!("health {}", pep.health().await?);

        let mut req = WireRequest {
            request_id: "req-1".into(),
            subject: WireSubject {
                id: fixture.verifier.technician_id.to_string(),
                label: fixture.verifier.label.to_string(),
            },
            action: Action::VerifyChain,
            resource: fixture.leaf.to_string(),
            as_of: None,
        };
        println!("request  {}", serde_json::to_string(&req)?);
        println!(
            "response {}",
            serde_json::to_string(&pep.decide(&req).await?)?
        );

        req.request_id = "req-2".into();
        req.action = Action::Read;
        // the leaf report, not readable from the bottom of the lattice
        req.resource = fixture.reports.last().unwrap().report_id.to_string();
        req.subject.label = caltrace::label::make_bottom(&universe, &ladder).to_string();
        println!(
            "response {}",
            serde_json::to_string(&pep.decide(&req).await?)?
        );

        svc.shutdown().await?;
        Ok::<_, Box<dyn std::error::Error>>(())
    })
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
