use chrono::{Duration, TimeZone};

use super::*;
use crate::policy::{DenyReason, Outcome};

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
}

fn year() -> Duration {
    Duration::days(365)
}

/// Sensor -> transfer standard (O2) -> NMI reference (O4). O2 and O3 compete.
struct Case {
    store: Store,
    t1: Technician,
    t2: Technician,
    t3: Technician,
}

fn case_study() -> Case {
    let universe =
        CoiUniverse::new(vec![vec!["O5", "O6"], vec!["O2", "O3"], vec!["O7", "O8"]]).unwrap();
    let ladder = IntegrityLadder::new(3).unwrap();
    let mut store = Store::in_memory(universe.clone(), ladder);
    let t1 = Technician::at_facility("T1", "O1", 1, &universe, &ladder).unwrap();
    let t2 = Technician::at_facility("T2", "O2", 2, &universe, &ladder).unwrap();
    let t3 = Technician::at_facility("T3", "O3", 1, &universe, &ladder).unwrap();
    let t4 = Technician::at_facility("T4", "O4", 3, &universe, &ladder).unwrap();
    store
        .register_device("nmi-ref", "primary standard")
        .unwrap();
    store
        .register_device("transfer", "transfer standard")
        .unwrap();
    store
        .register_device("sensor", "infrared thermometer")
        .unwrap();
    for (device, tech, parents) in [
        ("nmi-ref", &t4, vec![]),
        ("transfer", &t2, vec!["nmi-ref"]),
        ("sensor", &t1, vec!["transfer"]),
    ] {
        store
            .initial_calibration(request(device, tech, &parents, t0(), t0() + year()))
            .unwrap();
    }
    Case { store, t1, t2, t3 }
}

fn request(
    device: &str,
    tech: &Technician,
    parents: &[&str],
    issued: DateTime<Utc>,
    expires: DateTime<Utc>,
) -> CalibrationRequest {
    CalibrationRequest {
        device_id: device.into(),
        technician: tech.clone(),
        parents: parents.iter().map(|&p| p.into()).collect(),
        issued_at: issued,
        expires_at: expires,
        payload: Payload::new(),
    }
}

#[test]
fn birth_labels_follow_the_technician() {
    let case = case_study();
    let sensor = case.store.current_report(&"sensor".into()).unwrap();
    assert_eq!(sensor.label.to_string(), "{coi:[_,_,_], rank:1}");
    let ts = case.store.current_report(&"transfer".into()).unwrap();
    assert_eq!(ts.label.to_string(), r#"{coi:[_,"O2",_], rank:2}"#);
    assert_eq!(ts.label, case.t2.label);
}

#[test]
fn register_and_query() {
    let mut store = Store::in_memory(CoiUniverse::empty(), IntegrityLadder::new(1).unwrap());
    let d = store.register_device("dmm", "multimeter").unwrap();
    assert_eq!(d.current_report, None);
    assert_eq!(store.device(&"dmm".into()).unwrap().kind, "multimeter");
    assert!(matches!(
        store.register_device("dmm", "again"),
        Err(StoreError::DuplicateDevice(_))
    ));
}

#[test]
fn rival_recalibration_is_a_conflict_at_the_shared_set() {
    let mut case = case_study();
    let err = case
        .store
        .recalibrate(request(
            "sensor",
            &case.t3,
            &["transfer"],
            t0() + Duration::days(1),
            t0() + year(),
        ))
        .unwrap_err();
    assert!(
        matches!(err, StoreError::ConflictOfInterest { position: 1 }),
        "{err:?}"
    );
}

#[test]
fn field_technician_cannot_read_up_the_transfer_standard() {
    // T1 carries no O2 information, so the literal dominance rule denies
    // chain verification through the O2-labelled transfer standard.
    let mut case = case_study();
    let err = case
        .store
        .recalibrate(request(
            "sensor",
            &case.t1,
            &["transfer"],
            t0() + Duration::days(1),
            t0() + year(),
        ))
        .unwrap_err();
    let StoreError::ChainDenied(d) = err else {
        panic!("{err:?}")
    };
    assert_eq!(
        d.reason,
        Some(DenyReason::ChainElement {
            index: 1,
            device: None,
            cause: Box::new(DenyReason::DominanceFailed { position: 1 })
        })
    );
}

#[test]
fn same_technician_recalibrates_the_transfer_standard() {
    let mut case = case_study();
    let before = case.store.report_history(&"transfer".into()).len();
    let r = case
        .store
        .recalibrate(request(
            "transfer",
            &case.t2,
            &["nmi-ref"],
            t0() + Duration::days(30),
            t0() + year(),
        ))
        .unwrap();
    assert_eq!(r.report_id.as_str(), "transfer/2");
    assert_eq!(
        case.store.report_history(&"transfer".into()).len(),
        before + 1
    );
    assert_eq!(
        case.store
            .current_report(&"transfer".into())
            .unwrap()
            .report_id,
        r.report_id
    );
    // first report retained
    assert!(case.store.report(&"transfer/1".into()).is_some());
}

#[test]
fn unaffiliated_technician_may_recalibrate() {
    let mut case = case_study();
    let u = case.store.universe().clone();
    let l = *case.store.ladder();
    // O9 is in no COI set; it carries O2 knowledge via T and rank 1
    let t9 = Technician::new(
        "T9",
        "O9",
        SecurityLabel::new(
            vec![CoiEntry::Bottom, CoiEntry::member("O2"), CoiEntry::Bottom],
            1,
        ),
        &u,
        &l,
    )
    .unwrap();
    // Star property fails against the sensor's {_,_,_} label though: this
    // technician would leak O2 information downward.
    let err = case
        .store
        .recalibrate(request("sensor", &t9, &["transfer"], t0(), t0() + year()))
        .unwrap_err();
    assert!(matches!(err, StoreError::WriteDenied(ref d) if d.outcome == Outcome::Deny));

    let t_plain = Technician::at_facility("T10", "O10", 2, &u, &l).unwrap();
    // transfer standard chain: transfer {_,O2,_}/2 and nmi {_,_,_}/3. A
    // rank-2 technician with no memberships cannot read the O2 report.
    assert!(matches!(
        case.store.recalibrate(request(
            "transfer",
            &t_plain,
            &["nmi-ref"],
            t0(),
            t0() + year()
        )),
        Err(StoreError::ChainDenied(_))
    ));
    // the NMI reference has a clean chain
    let t_root = Technician::at_facility("T11", "O11", 3, &u, &l).unwrap();
    case.store
        .recalibrate(request("nmi-ref", &t_root, &[], t0(), t0() + year()))
        .unwrap();
}

#[test]
fn lifecycle_preconditions() {
    let mut case = case_study();
    let t1 = case.t1.clone();
    assert!(matches!(
        case.store
            .initial_calibration(request("sensor", &t1, &["transfer"], t0(), t0() + year())),
        Err(StoreError::AlreadyCalibrated(_))
    ));
    case.store.register_device("probe", "probe").unwrap();
    assert!(matches!(
        case.store
            .recalibrate(request("probe", &t1, &["transfer"], t0(), t0() + year())),
        Err(StoreError::NoPriorReport(_))
    ));
    assert!(matches!(
        case.store.initial_calibration(request("probe", &t1, &["transfer"], t0() + Duration::days(400), t0() + Duration::days(800))),
        Err(StoreError::ParentMissingOrExpired(p)) if p.as_str() == "transfer"
    ));
    assert!(matches!(
        case.store
            .initial_calibration(request("probe", &t1, &["ghost"], t0(), t0() + year())),
        Err(StoreError::ParentMissingOrExpired(_))
    ));
    assert!(matches!(
        case.store
            .initial_calibration(request("probe", &t1, &["transfer"], t0(), t0())),
        Err(StoreError::InvalidValidity)
    ));
    assert!(matches!(
        case.store
            .initial_calibration(request("probe", &t1, &[], t0(), t0() + year())),
        Err(StoreError::RootRankMismatch {
            expected: 3,
            found: 1
        })
    ));
    assert!(matches!(
        case.store.initial_calibration(request(
            "probe",
            &t1,
            &["transfer", "transfer"],
            t0(),
            t0() + year()
        )),
        Err(StoreError::DuplicateParent(_))
    ));
    assert!(matches!(
        case.store
            .initial_calibration(request("nope", &t1, &[], t0(), t0() + year())),
        Err(StoreError::UnknownDevice(_))
    ));
}

#[test]
fn recalibration_cannot_close_a_cycle() {
    let mut case = case_study();
    let t4 =
        Technician::at_facility("T4", "O4", 3, case.store.universe(), case.store.ladder()).unwrap();
    // the NMI reference may not start using the sensor as its reference
    let err = case
        .store
        .recalibrate(request("nmi-ref", &t4, &["sensor"], t0(), t0() + year()))
        .unwrap_err();
    assert!(matches!(err, StoreError::Cycle(_)), "{err:?}");
}

#[test]
fn technician_label_must_match_facility() {
    let u = CoiUniverse::new(vec![vec!["O2", "O3"]]).unwrap();
    let l = IntegrityLadder::new(2).unwrap();
    let err = Technician::new(
        "T",
        "O2",
        SecurityLabel::new(vec![CoiEntry::Bottom], 1),
        &u,
        &l,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        StoreError::TechnicianInconsistent { position: 0, .. }
    ));
    assert!(Technician::new(
        "T",
        "O2",
        SecurityLabel::new(vec![CoiEntry::Tainted], 1),
        &u,
        &l
    )
    .is_ok());
}

#[test]
fn classified_device_rejects_lower_writers() {
    let u = CoiUniverse::new(vec![vec!["O2", "O3"]]).unwrap();
    let l = IntegrityLadder::new(2).unwrap();
    let mut store = Store::in_memory(u.clone(), l);
    store
        .register_labelled_device(
            "vault",
            "classified gauge",
            SecurityLabel::new(vec![CoiEntry::member("O3")], 2),
        )
        .unwrap();
    let t2 = Technician::at_facility("T2", "O2", 2, &u, &l).unwrap();
    let err = store
        .initial_calibration(request("vault", &t2, &[], t0(), t0() + year()))
        .unwrap_err();
    let StoreError::WriteDenied(d) = err else {
        panic!()
    };
    assert_eq!(d.reason, Some(DenyReason::DominanceFailed { position: 0 }));
    let t3 = Technician::at_facility("T3", "O3", 2, &u, &l).unwrap();
    store
        .initial_calibration(request("vault", &t3, &[], t0(), t0() + year()))
        .unwrap();
}

#[test]
fn trace_verify_walks_to_the_roots() {
    let case = case_study();
    let v = case.store.trace_verify(&"sensor".into(), t0()).unwrap();
    assert!(v.complete);
    assert_eq!(
        v.visited
            .devices()
            .map(DeviceId::as_str)
            .collect::<Vec<_>>(),
        ["sensor", "transfer", "nmi-ref"]
    );
    let root = case.store.trace_verify(&"nmi-ref".into(), t0()).unwrap();
    assert!(root.complete);
    assert_eq!(root.visited.len(), 1);
    assert!(matches!(
        case.store.trace_verify(&"ghost".into(), t0()),
        Err(StoreError::UnknownDevice(_))
    ));
}

#[test]
fn expired_intermediate_breaks_traceability() {
    let universe = CoiUniverse::empty();
    let ladder = IntegrityLadder::new(3).unwrap();
    let mut store = Store::in_memory(universe.clone(), ladder);
    let tech =
        |rank| Technician::at_facility(format!("T{rank}"), "O", rank, &universe, &ladder).unwrap();
    for d in ["a", "b", "c"] {
        store.register_device(d, "x").unwrap();
    }
    store
        .initial_calibration(request("c", &tech(3), &[], t0(), t0() + year()))
        .unwrap();
    store
        .initial_calibration(request(
            "b",
            &tech(2),
            &["c"],
            t0(),
            t0() + Duration::days(10),
        ))
        .unwrap();
    store
        .initial_calibration(request("a", &tech(1), &["b"], t0(), t0() + year()))
        .unwrap();
    assert!(store.trace_verify(&"a".into(), t0()).unwrap().complete);
    let v = store
        .trace_verify(&"a".into(), t0() + Duration::days(20))
        .unwrap();
    assert!(!v.complete);
    assert_eq!(v.failure.as_ref().map(|f| f.device().as_str()), Some("b"));
    assert_eq!(v.visited.len(), 2);
}

#[test]
fn uncalibrated_device_fails_verification() {
    let mut store = Store::in_memory(CoiUniverse::empty(), IntegrityLadder::new(1).unwrap());
    store.register_device("new", "x").unwrap();
    let v = store.trace_verify(&"new".into(), t0()).unwrap();
    assert_eq!(
        v.failure,
        Some(TraceFailure::MissingReport {
            device: "new".into()
        })
    );
    assert!(matches!(
        store.get_chain(&"new".into()),
        Err(StoreError::NoReport(_))
    ));
}

#[test]
fn shared_ancestors_and_memoization() {
    // diamond: leaf -> {l, r} -> root
    let universe = CoiUniverse::empty();
    let ladder = IntegrityLadder::new(3).unwrap();
    let mut store = Store::in_memory(universe.clone(), ladder);
    let tech = |rank| Technician::at_facility("T", "O", rank, &universe, &ladder).unwrap();
    for d in ["leaf", "l", "r", "root"] {
        store.register_device(d, "x").unwrap();
    }
    store
        .initial_calibration(request("root", &tech(3), &[], t0(), t0() + year()))
        .unwrap();
    store
        .initial_calibration(request("l", &tech(2), &["root"], t0(), t0() + year()))
        .unwrap();
    store
        .initial_calibration(request("r", &tech(2), &["root"], t0(), t0() + year()))
        .unwrap();
    store
        .initial_calibration(request("leaf", &tech(1), &["l", "r"], t0(), t0() + year()))
        .unwrap();
    assert_eq!(store.get_chain(&"leaf".into()).unwrap().len(), 4);
    assert_eq!(
        store
            .trace_verify(&"leaf".into(), t0())
            .unwrap()
            .visited
            .len(),
        4
    );
    assert_eq!(
        store
            .trace_verify_with(&"leaf".into(), t0(), false)
            .unwrap()
            .visited
            .len(),
        5
    );
}

#[test]
fn log_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.log");
    let universe = CoiUniverse::new(vec![vec!["O2", "O3"]]).unwrap();
    let ladder = IntegrityLadder::new(2).unwrap();
    {
        let mut store = Store::create(&path, universe.clone(), ladder).unwrap();
        let root = Technician::at_facility("T", "O2", 2, &universe, &ladder).unwrap();
        store.register_device("ref", "x").unwrap();
        store
            .initial_calibration(request("ref", &root, &[], t0(), t0() + year()))
            .unwrap();
        assert_eq!(store.seq(), 3);
    }
    assert!(
        Store::create(&path, universe.clone(), ladder).is_err(),
        "must not clobber"
    );
    let mut reopened = Store::open(&path).unwrap();
    assert_eq!(reopened.seq(), 3);
    assert_eq!(
        reopened
            .current_report(&"ref".into())
            .unwrap()
            .label
            .to_string(),
        r#"{coi:["O2"], rank:2}"#
    );
    // appends continue the sequence
    reopened.register_device("dut", "x").unwrap();
    drop(reopened);
    assert_eq!(Store::open(&path).unwrap().seq(), 4);

    let mut bytes = std::fs::read(&path).unwrap();
    let records = read_records(&bytes[..]).unwrap();
    let third_start: usize = records[..2].iter().map(|r| r.encode().len()).sum();
    // flip a byte inside the third record's payload
    let target = third_start + 4 + records[2].encode().len() / 2;
    bytes[target] = if bytes[target] == b'a' { b'b' } else { b'a' };
    std::fs::write(&path, &bytes).unwrap();
    match Store::open(&path) {
        Err(StoreError::Log(LogError::Corrupt { seq })) => assert_eq!(seq, 3),
        Err(StoreError::Log(LogError::Malformed { .. })) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn export_carries_history() {
    let mut case = case_study();
    case.store
        .recalibrate(request(
            "transfer",
            &case.t2,
            &["nmi-ref"],
            t0(),
            t0() + year(),
        ))
        .unwrap();
    let export = case.store.export_device(&"transfer".into()).unwrap();
    assert_eq!(export.reports.len(), 2);
    let json = serde_json::to_value(&export).unwrap();
    assert_eq!(json["device"]["current_report"], "transfer/2");
    let back: DeviceExport = serde_json::from_value(json).unwrap();
    assert_eq!(back, export);
    assert_eq!(case.store.export_all().len(), 3);
}
