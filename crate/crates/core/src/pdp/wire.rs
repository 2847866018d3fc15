use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::TechnicianId;
use crate::label::{LabelError, SecurityLabel};
use crate::policy::{
    AccessRequest, Action, Decision, DenyReason, EngineMode, Outcome, RequestTarget,
};

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("subject label: {0}")]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSubject {
    pub id: String,
    /// Canonical label text, e.g. `{coi:[_,"O2"], rank:2}`.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub request_id: String,
    pub subject: WireSubject,
    pub action: Action,
    /// Report id for reads, device id otherwise.
    pub resource: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_of: Option<DateTime<Utc>>,
}

impl WireRequest {
    pub fn to_access_request(&self) -> Result<AccessRequest, WireError> {
        let subject_label: SecurityLabel = self.subject.label.parse()?;
        let target = match self.action {
            Action::Read => RequestTarget::Read(self.resource.as_str().into()),
            Action::Write => RequestTarget::Write(self.resource.as_str().into()),
            Action::VerifyChain => RequestTarget::VerifyChain(self.resource.as_str().into()),
        };
        Ok(AccessRequest {
            request_id: self.request_id.clone(),
            subject_id: TechnicianId::new(self.subject.id.clone()),
            subject_label,
            target,
            as_of: self.as_of,
        })
    }
}

impl From<&AccessRequest> for WireRequest {
    fn from(req: &AccessRequest) -> Self {
        let resource = match &req.target {
            RequestTarget::Read(r) => r.to_string(),
            RequestTarget::Write(d) | RequestTarget::VerifyChain(d) => d.to_string(),
        };
        Self {
            request_id: req.request_id.clone(),
            subject: WireSubject {
                id: req.subject_id.to_string(),
                label: req.subject_label.to_string(),
            },
            action: req.action(),
            resource,
            as_of: req.as_of,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub request_id: String,
    pub decision: Outcome,
    pub reason: Option<DenyReason>,
    pub engine_mode: EngineMode,
    /// Label resolution and rule checks only.
    pub eval_time_ns: u64,
    /// From receipt of the request body to the response being built,
    /// including parsing.
    pub total_time_ns: u64,
}

impl WireResponse {
    pub fn from_decision(
        request_id: String,
        decision: Decision,
        mode: EngineMode,
        total_time_ns: u64,
    ) -> Self {
        let eval_time_ns = decision.evaluation_time.as_nanos() as u64;
        Self {
            request_id,
            decision: decision.outcome,
            reason: decision.reason,
            engine_mode: mode,
            eval_time_ns,
            total_time_ns: total_time_ns.max(eval_time_ns),
        }
    }
}
