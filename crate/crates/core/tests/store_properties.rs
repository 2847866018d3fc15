use std::collections::{BTreeSet, HashMap};

use caltrace::label::{CoiEntry, CoiUniverse, IntegrityLadder, SecurityLabel};
use caltrace::store::{CalibrationReport, CalibrationRequest, Payload, Store, Technician};
use caltrace::{DeviceId, ReportId};
use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;

const FACILITIES: [&str; 5] = ["A", "B", "C", "D", "E"];
const Q: u32 = 3;

fn universe() -> CoiUniverse {
    CoiUniverse::new(vec![vec!["A", "B"], vec!["B", "C", "D"]]).unwrap()
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
}

#[derive(Debug, Clone)]
enum Op {
    Register,
    Calibrate {
        device: usize,
        facility: usize,
        rank: u32,
        parents: Vec<usize>,
        days: i64,
    },
    Recalibrate {
        device: usize,
        facility: usize,
        rank: u32,
        parents: Vec<usize>,
        days: i64,
    },
}

fn op() -> impl Strategy<Value = Op> {
    let parents = prop::collection::vec(0..12usize, 0..3);
    prop_oneof![
        1 => Just(Op::Register),
        3 => (0..12usize, 0..5usize, 1..=Q, parents.clone(), 1..200i64).prop_map(|(device, facility, rank, parents, days)| {
            Op::Calibrate { device, facility, rank, parents, days }
        }),
        2 => (0..12usize, 0..5usize, 1..=Q, parents, 1..200i64).prop_map(|(device, facility, rank, parents, days)| {
            Op::Recalibrate { device, facility, rank, parents, days }
        }),
    ]
}

struct Run {
    store: Store,
    /// issuing technician's label per report, recorded by the test
    issued_labels: HashMap<ReportId, SecurityLabel>,
    devices: Vec<DeviceId>,
    _dir: tempfile::TempDir,
    path: std::path::PathBuf,
}

fn run(ops: &[Op]) -> Run {
    let u = universe();
    let ladder = IntegrityLadder::new(Q).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.log");
    let mut store = Store::create(&path, u.clone(), ladder).unwrap();
    let mut devices: Vec<DeviceId> = Vec::new();
    let mut issued_labels = HashMap::new();
    for (step, op) in ops.iter().enumerate() {
        let before: HashMap<ReportId, CalibrationReport> = devices
            .iter()
            .flat_map(|d| store.report_history(d))
            .map(|r| (r.report_id.clone(), r.clone()))
            .collect();
        let counts: Vec<usize> = devices
            .iter()
            .map(|d| store.report_history(d).len())
            .collect();
        let issued_at = t0() + Duration::hours(step as i64);
        let request = |device: usize, facility: usize, rank: u32, parents: &[usize], days: i64| {
            let d = devices.get(device % devices.len().max(1))?.clone();
            let parents: Vec<DeviceId> = parents
                .iter()
                .filter_map(|&p| devices.get(p).cloned())
                .collect();
            let rank = if parents.is_empty() { Q } else { rank };
            let tech = Technician::at_facility(
                format!("T{facility}"),
                FACILITIES[facility],
                rank,
                &u,
                &ladder,
            )
            .ok()?;
            Some(CalibrationRequest {
                device_id: d,
                technician: tech,
                parents,
                issued_at,
                expires_at: issued_at + Duration::days(days),
                payload: Payload::new(),
            })
        };
        let issued = match op {
            Op::Register => {
                let id = DeviceId::new(format!("dev{}", devices.len()));
                store.register_device(id.clone(), "instrument").unwrap();
                devices.push(id);
                None
            }
            Op::Calibrate {
                device,
                facility,
                rank,
                parents,
                days,
            } => request(*device, *facility, *rank, parents, *days).and_then(|req| {
                let label = req.technician.label.clone();
                store.initial_calibration(req).ok().map(|r| (r, label))
            }),
            Op::Recalibrate {
                device,
                facility,
                rank,
                parents,
                days,
            } => request(*device, *facility, *rank, parents, *days).and_then(|req| {
                let label = req.technician.label.clone();
                store.recalibrate(req).ok().map(|r| (r, label))
            }),
        };
        if let Some((report, label)) = issued {
            issued_labels.insert(report.report_id.clone(), label);
        }
        // append-only: earlier reports untouched, counts never shrink
        for (id, old) in &before {
            assert_eq!(store.report(id), Some(old), "report {id} changed");
        }
        for (d, n) in devices.iter().zip(counts) {
            assert!(store.report_history(d).len() >= n);
        }
    }
    Run {
        store,
        issued_labels,
        devices,
        _dir: dir,
        path,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_reproduces_the_store_and_its_provenance(ops in prop::collection::vec(op(), 1..40)) {
        let r = run(&ops);
        let reopened = Store::open(&r.path).unwrap();
        prop_assert_eq!(reopened.export_all(), r.store.export_all());
        prop_assert_eq!(reopened.seq(), r.store.seq());
        for export in reopened.export_all() {
            for report in export.reports {
                prop_assert_eq!(Some(&report.label), r.issued_labels.get(&report.report_id));
            }
        }
    }

    #[test]
    fn complete_traces_have_complete_parents(ops in prop::collection::vec(op(), 1..40), day in 0i64..250) {
        let r = run(&ops);
        let as_of = t0() + Duration::days(day);
        for d in &r.devices {
            let v = r.store.trace_verify(d, as_of).unwrap();
            if v.complete {
                for p in &r.store.current_report(d).unwrap().parents {
                    prop_assert!(r.store.trace_verify(p, as_of).unwrap().complete);
                }
            }
        }
    }

    #[test]
    fn taint_only_where_two_rivals_meet(ops in prop::collection::vec(op(), 1..40)) {
        let r = run(&ops);
        let u = universe();
        for d in &r.devices {
            let Ok(chain) = r.store.get_chain(d) else { continue };
            let mut joined = SecurityLabel::bottom(&u, &IntegrityLadder::new(Q).unwrap());
            let mut facilities = BTreeSet::new();
            for node in &chain.nodes {
                joined = joined.join(&node.label).unwrap();
                facilities.insert(r.store.report(&node.report_id).unwrap().facility_id.clone());
            }
            for (k, set) in u.sets().iter().enumerate() {
                let rivals = facilities.iter().filter(|f| set.contains(f)).count();
                prop_assert_eq!(joined.coi()[k] == CoiEntry::Tainted, rivals >= 2, "device {} position {}", d, k);
            }
        }
    }
}
