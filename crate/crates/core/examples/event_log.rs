//! The store's append-only log: write, reopen, inspect records, detect
//! corruption.

use std::fs::File;

use caltrace::label::{CoiUniverse, IntegrityLadder};
use caltrace::store::{read_records, CalibrationRequest, Payload, Store, Technician};
use chrono::{Duration, TimeZone, Utc};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("events.log");
    let universe = CoiUniverse::new(vec![vec!["LabA", "LabB"]])?;
    let ladder = IntegrityLadder::new(2)?;
    let t0 = Utc.with_ymd_and_hms(2026, 3, 1, 0, 0, 0).unwrap();

    let mut store = Store::create(&path, universe.clone(), ladder)?;
    let root = Technician::at_facility("nmi", "NMI", 2, &universe, &ladder)?;
    let tech = Technician::at_facility("ana", "LabA", 1, &universe, &ladder)?;
    store.register_device("ref", "reference")?;
    store.register_device("gauge", "pressure gauge")?;
    let mut payload = Payload::new();
    payload.insert("offset_kpa".into(), serde_json::json!(0.12));
    for (device, t, parents) in [("ref", &root, vec![]), ("gauge", &tech, vec!["ref".into()])] {
        store.initial_calibration(CalibrationRequest {
            device_id: device.into(),
            technician: t.clone(),
            parents,
            issued_at: t0,
            expires_at: t0 + Duration::days(180),
            payload: payload.clone(),
        })?;
    }
    drop(store);

    for r in read_records(File::open(&path)?)? {
        println!(
            "seq {} {:<20} crc {:08x} {} bytes",
            r.seq,
            r.op,
            r.checksum,
            r.payload.len()
        );
    }
    let reopened = Store::open(&path)?;
    println!(
        "reopened: {} reports, seq {}",
        reopened.report_count(),
        reopened.seq()
    );
    println!(
        "{}",
        serde_json::to_string_pretty(&reopened.export_device(&"gauge".into())?)?
    );

    // flip one payload byte in the last record
    let mut bytes = std::fs::read(&path)?;
    let n = bytes.len();
    bytes[n - 40] ^= 0x01;
    std::fs::write(&path, bytes)?;
    match Store::open(&path) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted log: {e}"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
