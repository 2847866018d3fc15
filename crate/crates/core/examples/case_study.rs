//! A three-level hierarchy: NMI reference, a transfer standard calibrated
//! at O2, a field sensor calibrated at O1. O2 and O3 are rivals.

use caltrace::label::{CoiUniverse, IntegrityLadder};
use caltrace::store::{CalibrationRequest, Payload, Store, StoreError, Technician};
use chrono::{Duration, TimeZone, Utc};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let t0 = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    let universe = CoiUniverse::new(vec![vec!["O5", "O6"], vec!["O2", "O3"], vec!["O7", "O8"]])?;
    let ladder = IntegrityLadder::new(3)?;
    let mut store = Store::in_memory(universe.clone(), ladder);

    let nmi = Technician::at_facility("NMI-1", "O4", 3, &universe, &ladder)?;
    let t1 = Technician::at_facility("T1", "O1", 1, &universe, &ladder)?;
    let t2 = Technician::at_facility("T2", "O2", 2, &universe, &ladder)?;
    let t3 = Technician::at_facility("T3", "O3", 1, &universe, &ladder)?;

    let request =
        |device: &str, tech: &Technician, parents: &[&str], days: i64| CalibrationRequest {
            device_id: device.into(),
            technician: tech.clone(),
            parents: parents.iter().map(|&p| p.into()).collect(),
            issued_at: t0 + Duration::days(days),
            expires_at: t0 + Duration::days(days + 365),
            payload: Payload::new(),
        };

    store.register_device("nmi-ref", "primary thermometer")?;
    store.register_device("transfer", "transfer standard")?;
    store.register_device("sensor", "infrared thermometer")?;
    for (device, tech, parents) in [
        ("nmi-ref", &nmi, &[][..]),
        ("transfer", &t2, &["nmi-ref"]),
        ("sensor", &t1, &["transfer"]),
    ] {
        let r = store.initial_calibration(request(device, tech, parents, 0))?;
        println!("{:<10} {}  by {}", device, r.label, r.technician_id);
    }

    let chain = store.get_chain(&"sensor".into())?;
    let path: Vec<String> = chain.devices().map(|d| d.to_string()).collect();
    println!("chain: {}", path.join(" -> "));

    match store.recalibrate(request("sensor", &t3, &["transfer"], 30)) {
        Err(StoreError::ConflictOfInterest { position }) => {
            println!(
                "T3 (O3) recalibrating the sensor: conflict of interest at COI position {position}"
            )
        }
        other => println!("T3: unexpected {other:?}"),
    }

    // even the original technician is refused: reading the O2 report in the
    // chain needs O2 in the subject's label, writing the sensor forbids it
    match store.recalibrate(request("sensor", &t1, &["transfer"], 30)) {
        Ok(_) => println!("T1 recalibrating the sensor: issued"),
        Err(e) => println!("T1 recalibrating the sensor: {e}"),
    }

    let v = store.trace_verify(&"sensor".into(), t0 + Duration::days(100))?;
    println!("trace complete at day 100: {}", v.complete);
    let v = store.trace_verify(&"sensor".into(), t0 + Duration::days(400))?;
    println!("trace at day 400: {:?}", v.failure);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
