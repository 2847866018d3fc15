use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{DeviceId, FacilityId, ReportId, TechnicianId};
use crate::label::{validate_label, CoiEntry, CoiUniverse, IntegrityLadder, SecurityLabel};

use super::StoreError;

/// Opaque calibration data (offsets, operating ranges, ...).
pub type Payload = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub device_id: DeviceId,
    pub kind: String,
    pub current_report: Option<ReportId>,
    /// Label a classified device must be written at. Unlabelled devices take
    /// the label of whoever calibrates them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_label: Option<SecurityLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Technician {
    pub technician_id: TechnicianId,
    pub facility_id: FacilityId,
    pub label: SecurityLabel,
}

impl Technician {
    /// Checks the label against the universe and that every COI set holding
    /// the technician's facility records it as a member (or tainted).
    pub fn new(
        technician_id: impl Into<TechnicianId>,
        facility_id: impl Into<FacilityId>,
        label: SecurityLabel,
        universe: &CoiUniverse,
        ladder: &IntegrityLadder,
    ) -> Result<Self, StoreError> {
        let tech = Self {
            technician_id: technician_id.into(),
            facility_id: facility_id.into(),
            label,
        };
        tech.check(universe, ladder)?;
        Ok(tech)
    }

    /// Technician whose label is exactly its facility's memberships.
    pub fn at_facility(
        technician_id: impl Into<TechnicianId>,
        facility_id: impl Into<FacilityId>,
        rank: u32,
        universe: &CoiUniverse,
        ladder: &IntegrityLadder,
    ) -> Result<Self, StoreError> {
        let facility_id = facility_id.into();
        let label = SecurityLabel::for_facility(universe, &facility_id, rank);
        Self::new(technician_id, facility_id, label, universe, ladder)
    }

    pub fn check(
        &self,
        universe: &CoiUniverse,
        ladder: &IntegrityLadder,
    ) -> Result<(), StoreError> {
        validate_label(&self.label, universe, ladder)?;
        for &pos in universe.positions_of(&self.facility_id) {
            match &self.label.coi()[pos] {
                CoiEntry::Tainted => {}
                CoiEntry::Member(f) if *f == self.facility_id => {}
                _ => {
                    return Err(StoreError::TechnicianInconsistent {
                        technician: self.technician_id.clone(),
                        position: pos,
                    })
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub report_id: ReportId,
    pub device_id: DeviceId,
    pub technician_id: TechnicianId,
    pub facility_id: FacilityId,
    pub label: SecurityLabel,
    /// Reference devices used for this calibration, in the order they are
    /// traced.
    pub parents: Vec<DeviceId>,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    #[serde(default)]
    pub payload: Payload,
}

impl CalibrationReport {
    pub fn is_root(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn is_valid_at(&self, as_of: DateTime<Utc>) -> bool {
        as_of < self.expires_at
    }
}

/// Inputs to a calibration event (birth or recalibration).
#[derive(Debug, Clone)]
pub struct CalibrationRequest {
    pub device_id: DeviceId,
    pub technician: Technician,
    pub parents: Vec<DeviceId>,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainNode {
    pub device_id: DeviceId,
    pub report_id: ReportId,
    pub label: SecurityLabel,
    pub parents: Vec<DeviceId>,
    /// Distance from the queried device along the path that first reached
    /// this node.
    pub depth: usize,
}

/// Depth-first view of a device's traceability chain; shared ancestors
/// appear once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainView {
    pub nodes: Vec<ChainNode>,
}

impl ChainView {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &SecurityLabel> {
        self.nodes.iter().map(|n| &n.label)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceId> {
        self.nodes.iter().map(|n| &n.device_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceFailure {
    /// Device in the chain has never been calibrated.
    MissingReport {
        device: DeviceId,
    },
    Expired {
        device: DeviceId,
        report: ReportId,
    },
    /// A parent reference that does not name a registered device.
    UnknownParent {
        device: DeviceId,
    },
}

impl TraceFailure {
    pub fn device(&self) -> &DeviceId {
        match self {
            TraceFailure::MissingReport { device }
            | TraceFailure::Expired { device, .. }
            | TraceFailure::UnknownParent { device } => device,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub complete: bool,
    pub visited: ChainView,
    pub failure: Option<TraceFailure>,
}

/// Export of one device and its full report history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceExport {
    pub device: Device,
    pub reports: Vec<CalibrationReport>,
}
