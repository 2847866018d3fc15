//! Label algebra: construction, canonical text, dominance and join.

use caltrace::label::{
    make_bottom, make_system_high, CoiEntry, CoiUniverse, IntegrityLadder, SecurityLabel,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let universe = CoiUniverse::new(vec![vec!["O2", "O3"], vec!["O3", "O9"]])?;
    let ladder = IntegrityLadder::new(4)?;

    let bottom = make_bottom(&universe, &ladder);
    let top = make_system_high(&universe, &ladder);
    println!("bottom      {bottom}");
    println!("system high {top}");

    // O3 sits in both sets
    let o3 = SecurityLabel::for_facility(&universe, &"O3".into(), 2);
    let o2 = SecurityLabel::for_facility(&universe, &"O2".into(), 3);
    println!("O3 at rank 2: {o3}");
    println!("O2 at rank 3: {o2}");
    println!(
        "O3 >= O2? {}   O2 >= O3? {}",
        o3.dominates(&o2)?,
        o2.dominates(&o3)?
    );

    let joined = o3.join(&o2)?;
    println!("join        {joined}");
    assert!(joined.dominates(&o3)? && joined.dominates(&o2)?);

    let parsed: SecurityLabel = r#"{coi:[*,"O9"], rank:1}"#.parse()?;
    println!(
        "parsed      {parsed}, first entry tainted: {}",
        parsed.coi()[0] == CoiEntry::Tainted
    );
    println!("as JSON     {}", serde_json::to_string(&parsed)?);
    for text in [
        "{coi:[_], rank:1}",
        "{coi:[O2,_], rank:1}",
        "{coi:[_,_], rank:0}",
    ] {
        match text.parse::<SecurityLabel>() {
            Ok(l) => println!(
                "{text:<22} parses, validates: {:?}",
                caltrace::label::validate_label(&l, &universe, &ladder)
            ),
            Err(e) => println!("{text:<22} rejected: {e}"),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
