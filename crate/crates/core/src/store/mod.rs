//! Devices, calibration reports and their lifecycle.
//!
//! The store is an in-memory index over an append-only event log. Every
//! mutation is validated, appended to the log and only then applied, so
//! reopening a log replays to the same state. Reads never touch the log.
//!
//! Concurrency is single-writer, multi-reader: wrap the store in a
//! [`SharedStore`] and take the write lock only for lifecycle operations.

mod log;
mod model;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{DeviceId, ReportId, TechnicianId};
use crate::label::{
    validate_label, CoiEntry, CoiUniverse, IntegrityLadder, LabelError, SecurityLabel,
};
use crate::policy::{self, Decision};

pub use log::{checksum, read_records, EventLog, LogError, Record};
pub use model::{
    CalibrationReport, CalibrationRequest, ChainNode, ChainView, Device, DeviceExport, Payload,
    Technician, TraceFailure, Verification,
};

pub type SharedStore = Arc<RwLock<Store>>;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("device {0} already registered")]
    DuplicateDevice(DeviceId),
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("unknown report {0}")]
    UnknownReport(ReportId),
    #[error("device {0} has no calibration report")]
    NoReport(DeviceId),
    #[error("device {0} is already calibrated")]
    AlreadyCalibrated(DeviceId),
    #[error("device {0} has never been calibrated")]
    NoPriorReport(DeviceId),
    #[error("write denied: {0}")]
    WriteDenied(Decision),
    #[error("chain verification denied: {0}")]
    ChainDenied(Decision),
    #[error("parent {0} is missing or has no valid report")]
    ParentMissingOrExpired(DeviceId),
    #[error("parent {0} listed twice")]
    DuplicateParent(DeviceId),
    #[error("recalibration would mix rival facilities at COI position {position}")]
    ConflictOfInterest { position: usize },
    #[error("parent link would make {0} its own ancestor")]
    Cycle(DeviceId),
    #[error("report must be issued before it expires")]
    InvalidValidity,
    #[error("root reports must carry rank {expected}, got {found}")]
    RootRankMismatch { expected: u32, found: u32 },
    #[error(
        "technician {technician} label disagrees with its facility at COI position {position}"
    )]
    TechnicianInconsistent {
        technician: TechnicianId,
        position: usize,
    },
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("event seq {seq} cannot be replayed: {message}")]
    Replay { seq: u64, message: String },
}

const OP_INIT: &str = "init";
const OP_REGISTER: &str = "register_device";
const OP_INITIAL: &str = "initial_calibration";
const OP_RECALIBRATE: &str = "recalibration";

#[derive(Serialize, Deserialize)]
struct InitEvent {
    universe: CoiUniverse,
    levels: IntegrityLadder,
}

#[derive(Serialize, Deserialize)]
struct RegisterEvent {
    device_id: DeviceId,
    kind: String,
    #[serde(default)]
    target_label: Option<SecurityLabel>,
}

#[derive(Serialize, Deserialize)]
struct ReportEvent {
    technician: Technician,
    report: CalibrationReport,
}

#[derive(Debug)]
pub struct Store {
    universe: CoiUniverse,
    ladder: IntegrityLadder,
    devices: HashMap<DeviceId, Device>,
    reports: HashMap<ReportId, CalibrationReport>,
    history: HashMap<DeviceId, Vec<ReportId>>,
    seq: u64,
    log: EventLog,
}

impl Store {
    pub fn in_memory(universe: CoiUniverse, ladder: IntegrityLadder) -> Self {
        let mut store = Self::empty(universe, ladder, EventLog::memory());
        store.log_init().expect("memory log cannot fail");
        store
    }

    /// Creates a new log file at `path`.
    pub fn create(
        path: impl AsRef<Path>,
        universe: CoiUniverse,
        ladder: IntegrityLadder,
    ) -> Result<Self, StoreError> {
        let log = EventLog::create(path.as_ref())?;
        let mut store = Self::empty(universe, ladder, log);
        store.log_init()?;
        Ok(store)
    }

    /// Replays an existing log. A bad checksum stops replay and reports the
    /// failing seq.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let records = read_records(File::open(path)?)?;
        let mut store = Self::replay(&records)?;
        store.log = EventLog::append_to(path)?;
        Ok(store)
    }

    /// Rebuilds the in-memory state from decoded records.
    pub fn replay(records: &[Record]) -> Result<Self, StoreError> {
        let Some(first) = records.first().filter(|r| r.op == OP_INIT) else {
            return Err(StoreError::Replay {
                seq: 1,
                message: "log does not start with init".into(),
            });
        };
        let init: InitEvent = decode(first)?;
        let mut store = Self::empty(init.universe, init.levels, EventLog::memory());
        store.seq = 1;
        for record in &records[1..] {
            let bad = |message: String| StoreError::Replay {
                seq: record.seq,
                message,
            };
            match record.op.as_str() {
                OP_REGISTER => {
                    let ev: RegisterEvent = decode(record)?;
                    if store.devices.contains_key(&ev.device_id) {
                        return Err(bad(format!("duplicate device {}", ev.device_id)));
                    }
                    store.apply_register(ev);
                }
                OP_INITIAL | OP_RECALIBRATE => {
                    let ev: ReportEvent = decode(record)?;
                    if ev.report.label != ev.technician.label {
                        return Err(bad("report label differs from technician label".into()));
                    }
                    if !store.devices.contains_key(&ev.report.device_id) {
                        return Err(bad(format!("unknown device {}", ev.report.device_id)));
                    }
                    validate_label(&ev.report.label, &store.universe, &store.ladder)?;
                    store.apply_report(ev.report);
                }
                other => return Err(bad(format!("unknown op {other}"))),
            }
            store.seq = record.seq;
        }
        Ok(store)
    }

    fn empty(universe: CoiUniverse, ladder: IntegrityLadder, log: EventLog) -> Self {
        Self {
            universe,
            ladder,
            devices: HashMap::new(),
            reports: HashMap::new(),
            history: HashMap::new(),
            seq: 0,
            log,
        }
    }

    fn log_init(&mut self) -> Result<(), StoreError> {
        let ev = InitEvent {
            universe: self.universe.clone(),
            levels: self.ladder,
        };
        self.commit(OP_INIT, &ev)
    }

    fn commit(&mut self, op: &str, event: &impl Serialize) -> Result<(), StoreError> {
        let payload = serde_json::to_string(event).expect("events serialize");
        let record = Record::new(self.seq + 1, op, payload);
        self.log.append(&record)?;
        self.seq = record.seq;
        Ok(())
    }

    pub fn into_shared(self) -> SharedStore {
        Arc::new(RwLock::new(self))
    }

    pub fn universe(&self) -> &CoiUniverse {
        &self.universe
    }

    pub fn ladder(&self) -> &IntegrityLadder {
        &self.ladder
    }

    /// Seq of the last committed event.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn device(&self, id: &DeviceId) -> Option<&Device> {
        self.devices.get(id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &Device> {
        self.devices.values()
    }

    pub fn report(&self, id: &ReportId) -> Option<&CalibrationReport> {
        self.reports.get(id)
    }

    pub fn report_count(&self) -> usize {
        self.reports.len()
    }

    pub fn current_report(&self, device: &DeviceId) -> Option<&CalibrationReport> {
        self.devices
            .get(device)?
            .current_report
            .as_ref()
            .and_then(|r| self.reports.get(r))
    }

    /// Every report ever issued for the device, oldest first.
    pub fn report_history(&self, device: &DeviceId) -> Vec<&CalibrationReport> {
        self.history
            .get(device)
            .map(|ids| ids.iter().filter_map(|r| self.reports.get(r)).collect())
            .unwrap_or_default()
    }

    pub fn get_report(&self, id: &ReportId) -> Result<&CalibrationReport, StoreError> {
        self.report(id)
            .ok_or_else(|| StoreError::UnknownReport(id.clone()))
    }

    pub fn register_device(
        &mut self,
        device_id: impl Into<DeviceId>,
        kind: impl Into<String>,
    ) -> Result<Device, StoreError> {
        self.register(device_id.into(), kind.into(), None)
    }

    /// Registers a device that must be written at `target` (a classified
    /// device). Calibrations are then checked against this label.
    pub fn register_labelled_device(
        &mut self,
        device_id: impl Into<DeviceId>,
        kind: impl Into<String>,
        target: SecurityLabel,
    ) -> Result<Device, StoreError> {
        validate_label(&target, &self.universe, &self.ladder)?;
        self.register(device_id.into(), kind.into(), Some(target))
    }

    fn register(
        &mut self,
        device_id: DeviceId,
        kind: String,
        target_label: Option<SecurityLabel>,
    ) -> Result<Device, StoreError> {
        if self.devices.contains_key(&device_id) {
            return Err(StoreError::DuplicateDevice(device_id));
        }
        let ev = RegisterEvent {
            device_id: device_id.clone(),
            kind,
            target_label,
        };
        self.commit(OP_REGISTER, &ev)?;
        self.apply_register(ev);
        Ok(self.devices[&device_id].clone())
    }

    fn apply_register(&mut self, ev: RegisterEvent) {
        self.devices.insert(
            ev.device_id.clone(),
            Device {
                device_id: ev.device_id,
                kind: ev.kind,
                current_report: None,
                target_label: ev.target_label,
            },
        );
    }

    fn apply_report(&mut self, report: CalibrationReport) {
        let device = self
            .devices
            .get_mut(&report.device_id)
            .expect("device checked before apply");
        device.current_report = Some(report.report_id.clone());
        self.history
            .entry(report.device_id.clone())
            .or_default()
            .push(report.report_id.clone());
        self.reports.insert(report.report_id.clone(), report);
    }

    /// The device's birth: its first calibration report.
    pub fn initial_calibration(
        &mut self,
        req: CalibrationRequest,
    ) -> Result<CalibrationReport, StoreError> {
        let device = self.known_device(&req.device_id)?;
        if device.current_report.is_some() {
            return Err(StoreError::AlreadyCalibrated(req.device_id));
        }
        self.check_request(&req)?;
        let object = device
            .target_label
            .clone()
            .unwrap_or_else(|| req.technician.label.clone());
        let decision = policy::evaluate_write(&req.technician.label, &object)?;
        if !decision.is_permit() {
            return Err(StoreError::WriteDenied(decision));
        }
        self.issue(OP_INITIAL, req)
    }

    /// Issues a new report for an already calibrated device. The technician
    /// must not bring a second rival facility into the chain, must be
    /// allowed to read every report in the current chain and must be allowed
    /// to write at the device's current label, checked in that order.
    pub fn recalibrate(
        &mut self,
        req: CalibrationRequest,
    ) -> Result<CalibrationReport, StoreError> {
        let current = self
            .current_report(&req.device_id)
            .ok_or_else(|| match self.devices.contains_key(&req.device_id) {
                true => StoreError::NoPriorReport(req.device_id.clone()),
                false => StoreError::UnknownDevice(req.device_id.clone()),
            })?
            .label
            .clone();
        self.check_request(&req)?;
        let chain = self.get_chain(&req.device_id)?;

        if let Some(position) = self.conflict_position(&req, &chain)? {
            return Err(StoreError::ConflictOfInterest { position });
        }
        let chain_labels: Vec<SecurityLabel> = chain.labels().cloned().collect();
        let decision =
            policy::evaluate_chain(&req.technician.label, &chain_labels).map_err(|e| match e {
                policy::PolicyError::Label(l) => StoreError::Label(l),
                other => unreachable!("chain is nonempty: {other}"),
            })?;
        if !decision.is_permit() {
            return Err(StoreError::ChainDenied(decision));
        }
        let decision = policy::evaluate_write(&req.technician.label, &current)?;
        if !decision.is_permit() {
            return Err(StoreError::WriteDenied(decision));
        }
        self.issue(OP_RECALIBRATE, req)
    }

    /// First COI position where adding the technician's label to everything
    /// the chain already carries would produce a new taint.
    fn conflict_position(
        &self,
        req: &CalibrationRequest,
        chain: &ChainView,
    ) -> Result<Option<usize>, StoreError> {
        let mut seen = SecurityLabel::bottom(&self.universe, &self.ladder);
        let history = self.report_history(&req.device_id);
        let mut labels: Vec<&SecurityLabel> = chain.labels().collect();
        labels.extend(history.iter().map(|r| &r.label));
        let parent_views = req
            .parents
            .iter()
            .map(|p| self.get_chain(p))
            .collect::<Result<Vec<_>, _>>()?;
        labels.extend(parent_views.iter().flat_map(|v| v.labels()));
        for l in labels {
            seen = seen.join(l)?;
        }
        let after = seen.join(&req.technician.label)?;
        Ok(after
            .coi()
            .iter()
            .zip(seen.coi())
            .position(|(a, b)| *a == CoiEntry::Tainted && *b != CoiEntry::Tainted))
    }

    fn known_device(&self, id: &DeviceId) -> Result<&Device, StoreError> {
        self.devices
            .get(id)
            .ok_or_else(|| StoreError::UnknownDevice(id.clone()))
    }

    /// Checks shared by both lifecycle operations.
    fn check_request(&self, req: &CalibrationRequest) -> Result<(), StoreError> {
        req.technician.check(&self.universe, &self.ladder)?;
        if req.issued_at >= req.expires_at {
            return Err(StoreError::InvalidValidity);
        }
        if req.parents.is_empty() && req.technician.label.rank() != self.ladder.root_rank() {
            return Err(StoreError::RootRankMismatch {
                expected: self.ladder.root_rank(),
                found: req.technician.label.rank(),
            });
        }
        let mut listed = HashSet::new();
        for parent in &req.parents {
            if !listed.insert(parent) {
                return Err(StoreError::DuplicateParent(parent.clone()));
            }
            if *parent == req.device_id {
                return Err(StoreError::Cycle(req.device_id.clone()));
            }
            match self.current_report(parent) {
                Some(r) if r.is_valid_at(req.issued_at) => {}
                _ => return Err(StoreError::ParentMissingOrExpired(parent.clone())),
            }
        }
        if self.reaches(&req.parents, &req.device_id) {
            return Err(StoreError::Cycle(req.device_id.clone()));
        }
        Ok(())
    }

    /// Whether `target` is an ancestor of (or one of) `from` through current
    /// reports.
    fn reaches(&self, from: &[DeviceId], target: &DeviceId) -> bool {
        let mut stack: Vec<&DeviceId> = from.iter().collect();
        let mut seen = HashSet::new();
        while let Some(d) = stack.pop() {
            if d == target {
                return true;
            }
            if !seen.insert(d) {
                continue;
            }
            if let Some(r) = self.current_report(d) {
                stack.extend(r.parents.iter());
            }
        }
        false
    }

    fn issue(
        &mut self,
        op: &str,
        req: CalibrationRequest,
    ) -> Result<CalibrationReport, StoreError> {
        let n = self.history.get(&req.device_id).map_or(0, Vec::len) + 1;
        let report = CalibrationReport {
            report_id: ReportId::new(format!("{}/{}", req.device_id, n)),
            device_id: req.device_id,
            technician_id: req.technician.technician_id.clone(),
            facility_id: req.technician.facility_id.clone(),
            label: req.technician.label.clone(),
            parents: req.parents,
            issued_at: req.issued_at,
            expires_at: req.expires_at,
            payload: req.payload,
        };
        let ev = ReportEvent {
            technician: req.technician,
            report,
        };
        self.commit(op, &ev)?;
        let report = ev.report;
        self.apply_report(report.clone());
        Ok(report)
    }

    /// Depth-first chain of current reports from `device` up to its roots,
    /// parents in listed order, shared ancestors once.
    pub fn get_chain(&self, device: &DeviceId) -> Result<ChainView, StoreError> {
        self.known_device(device)?;
        let mut view = ChainView::default();
        let mut seen = HashSet::new();
        let mut stack = vec![(device, 0usize)];
        while let Some((d, depth)) = stack.pop() {
            if !seen.insert(d) {
                continue;
            }
            let report = self
                .current_report(d)
                .ok_or_else(|| StoreError::NoReport(d.clone()))?;
            view.nodes.push(ChainNode {
                device_id: d.clone(),
                report_id: report.report_id.clone(),
                label: report.label.clone(),
                parents: report.parents.clone(),
                depth,
            });
            stack.extend(report.parents.iter().rev().map(|p| (p, depth + 1)));
        }
        Ok(view)
    }

    /// Recursive traceability verification: the device's report, then each
    /// parent's, depth first, until every path ends at a root report. Stops
    /// at the first missing or expired report.
    pub fn trace_verify(
        &self,
        device: &DeviceId,
        as_of: DateTime<Utc>,
    ) -> Result<Verification, StoreError> {
        self.trace_verify_with(device, as_of, true)
    }

    /// As [`Store::trace_verify`]; with `memoize` off every path is walked
    /// separately, so shared ancestors are checked once per path.
    pub fn trace_verify_with(
        &self,
        device: &DeviceId,
        as_of: DateTime<Utc>,
        memoize: bool,
    ) -> Result<Verification, StoreError> {
        self.known_device(device)?;
        let mut walk = TraceWalk {
            store: self,
            as_of,
            memoize,
            seen: HashSet::new(),
            visited: ChainView::default(),
        };
        let failure = walk.visit(device, 0);
        Ok(Verification {
            complete: failure.is_none(),
            visited: walk.visited,
            failure,
        })
    }

    pub fn export_device(&self, device: &DeviceId) -> Result<DeviceExport, StoreError> {
        let d = self.known_device(device)?;
        Ok(DeviceExport {
            device: d.clone(),
            reports: self.report_history(device).into_iter().cloned().collect(),
        })
    }

    /// One export document per device, sorted by device id.
    pub fn export_all(&self) -> Vec<DeviceExport> {
        let mut ids: Vec<&DeviceId> = self.devices.keys().collect();
        ids.sort();
        ids.into_iter()
            .map(|d| self.export_device(d).expect("listed device exists"))
            .collect()
    }
}

struct TraceWalk<'a> {
    store: &'a Store,
    as_of: DateTime<Utc>,
    memoize: bool,
    seen: HashSet<&'a DeviceId>,
    visited: ChainView,
}

impl<'a> TraceWalk<'a> {
    fn visit(&mut self, device: &'a DeviceId, depth: usize) -> Option<TraceFailure> {
        if self.memoize && !self.seen.insert(device) {
            return None;
        }
        let Some(dev) = self.store.devices.get(device) else {
            return Some(TraceFailure::UnknownParent {
                device: device.clone(),
            });
        };
        let Some(report) = dev
            .current_report
            .as_ref()
            .and_then(|r| self.store.reports.get(r))
        else {
            return Some(TraceFailure::MissingReport {
                device: device.clone(),
            });
        };
        self.visited.nodes.push(ChainNode {
            device_id: device.clone(),
            report_id: report.report_id.clone(),
            label: report.label.clone(),
            parents: report.parents.clone(),
            depth,
        });
        if !report.is_valid_at(self.as_of) {
            return Some(TraceFailure::Expired {
                device: device.clone(),
                report: report.report_id.clone(),
            });
        }
        // no parents: this path reached a root
        for parent in &report.parents {
            if let Some(f) = self.visit(parent, depth + 1) {
                return Some(f);
            }
        }
        None
    }
}

fn decode<T: for<'de> Deserialize<'de>>(record: &Record) -> Result<T, StoreError> {
    serde_json::from_str(&record.payload).map_err(|e| StoreError::Replay {
        seq: record.seq,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests;
