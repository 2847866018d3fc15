use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::baseline::{self, combine, SubPolicy, SubPolicyDenial, POLICY_SET};
use super::{Decision, DenyReason, PolicyError};
use crate::ids::{DeviceId, ReportId, TechnicianId};
use crate::label::{validate_label, SecurityLabel};
use crate::store::{CalibrationReport, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineMode {
    Unified,
    #[serde(rename = "baseline")]
    BaselineConjunction,
}

impl EngineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineMode::Unified => "unified",
            EngineMode::BaselineConjunction => "baseline",
        }
    }
}

impl fmt::Display for EngineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EngineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unified" => Ok(EngineMode::Unified),
            "baseline" => Ok(EngineMode::BaselineConjunction),
            other => Err(format!("unknown engine mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Read,
    Write,
    VerifyChain,
}

/// The action together with the only resource kind it accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RequestTarget {
    Read(ReportId),
    Write(DeviceId),
    VerifyChain(DeviceId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessRequest {
    pub request_id: String,
    pub subject_id: TechnicianId,
    pub subject_label: SecurityLabel,
    pub target: RequestTarget,
    /// When set, chain verification also requires every report to be
    /// unexpired at this instant.
    pub as_of: Option<DateTime<Utc>>,
}

impl AccessRequest {
    pub fn action(&self) -> Action {
        match self.target {
            RequestTarget::Read(_) => Action::Read,
            RequestTarget::Write(_) => Action::Write,
            RequestTarget::VerifyChain(_) => Action::VerifyChain,
        }
    }
}

/// A decision engine. Stateless apart from its configuration, so one
/// instance may serve any number of threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Engine {
    mode: EngineMode,
    memoize: bool,
}

impl Engine {
    pub fn new(mode: EngineMode) -> Self {
        Self {
            mode,
            memoize: true,
        }
    }

    pub fn unified() -> Self {
        Self::new(EngineMode::Unified)
    }

    pub fn baseline() -> Self {
        Self::new(EngineMode::BaselineConjunction)
    }

    /// With memoization off, ancestors shared between branches are checked
    /// once per path instead of once per chain.
    pub fn with_memoization(mut self, memoize: bool) -> Self {
        self.memoize = memoize;
        self
    }

    pub fn mode(&self) -> EngineMode {
        self.mode
    }

    pub fn evaluate_read(
        &self,
        subject: &SecurityLabel,
        report: &SecurityLabel,
    ) -> Result<Decision, PolicyError> {
        Ok(match self.mode {
            EngineMode::Unified => super::evaluate_read(subject, report)?,
            EngineMode::BaselineConjunction => baseline::evaluate_read(subject, report)?,
        })
    }

    pub fn evaluate_write(
        &self,
        subject: &SecurityLabel,
        object: &SecurityLabel,
    ) -> Result<Decision, PolicyError> {
        Ok(match self.mode {
            EngineMode::Unified => super::evaluate_write(subject, object)?,
            EngineMode::BaselineConjunction => baseline::evaluate_write(subject, object)?,
        })
    }

    pub fn evaluate_chain(
        &self,
        subject: &SecurityLabel,
        chain: &[SecurityLabel],
    ) -> Result<Decision, PolicyError> {
        match self.mode {
            EngineMode::Unified => super::evaluate_chain(subject, chain),
            EngineMode::BaselineConjunction => baseline::evaluate_chain(subject, chain),
        }
    }

    /// Resolves the request's labels from the store, decides, and records
    /// the elapsed time of resolution plus rule checks.
    pub fn timed_evaluate(
        &self,
        request: &AccessRequest,
        store: &Store,
    ) -> Result<Decision, PolicyError> {
        let start = Instant::now();
        let mut decision = self.evaluate_in(request, store)?;
        decision.evaluation_time = start.elapsed().max(Duration::from_nanos(1));
        Ok(decision)
    }

    fn evaluate_in(&self, request: &AccessRequest, store: &Store) -> Result<Decision, PolicyError> {
        let subject = &request.subject_label;
        validate_label(subject, store.universe(), store.ladder())
            .map_err(PolicyError::InvalidSubject)?;
        match &request.target {
            RequestTarget::Read(report_id) => {
                let report = store
                    .report(report_id)
                    .ok_or_else(|| PolicyError::UnknownResource(report_id.to_string()))?;
                validate_label(&report.label, store.universe(), store.ladder())?;
                self.evaluate_read(subject, &report.label)
            }
            RequestTarget::Write(device_id) => {
                let device = store
                    .device(device_id)
                    .ok_or_else(|| PolicyError::UnknownResource(device_id.to_string()))?;
                let object = match store.current_report(device_id) {
                    Some(r) => Some(&r.label),
                    None => device.target_label.as_ref(),
                };
                match object {
                    Some(object) => {
                        validate_label(object, store.universe(), store.ladder())?;
                        self.evaluate_write(subject, object)
                    }
                    // unlabelled, uncalibrated device: the report will carry
                    // the writer's own label
                    None => Ok(Decision::permit()),
                }
            }
            RequestTarget::VerifyChain(device_id) => {
                if store.device(device_id).is_none() {
                    return Err(PolicyError::UnknownResource(device_id.to_string()));
                }
                let walk = ChainWalk {
                    store,
                    as_of: request.as_of,
                    memoize: self.memoize,
                };
                Ok(match self.mode {
                    EngineMode::Unified => Decision::from_reason(walk.unified(subject, device_id)?),
                    EngineMode::BaselineConjunction => {
                        let mut denials = Vec::new();
                        for policy in POLICY_SET {
                            if let Some(cause) = walk.single_policy(policy, subject, device_id)? {
                                denials.push(SubPolicyDenial { policy, cause });
                            }
                        }
                        combine(denials)
                    }
                })
            }
        }
    }
}

/// Store-backed traversal of a traceability chain, depth first with parents
/// in listed order. Every visited report is resolved and its label checked
/// against the universe before any rule runs on it.
struct ChainWalk<'a> {
    store: &'a Store,
    as_of: Option<DateTime<Utc>>,
    memoize: bool,
}

impl<'a> ChainWalk<'a> {
    fn resolve(
        &self,
        device: &DeviceId,
    ) -> Result<Result<&'a CalibrationReport, DenyReason>, PolicyError> {
        let Some(report) = self.store.current_report(device) else {
            return Ok(Err(DenyReason::BrokenChain {
                device: device.clone(),
            }));
        };
        if let Some(as_of) = self.as_of {
            if !report.is_valid_at(as_of) {
                return Ok(Err(DenyReason::ReportExpired {
                    device: device.clone(),
                }));
            }
        }
        validate_label(&report.label, self.store.universe(), self.store.ladder())?;
        Ok(Ok(report))
    }

    /// Visits the chain, stopping at the first node `check` rejects.
    fn walk(
        &self,
        root: &DeviceId,
        mut check: impl FnMut(&SecurityLabel) -> Result<Option<DenyReason>, PolicyError>,
    ) -> Result<Option<DenyReason>, PolicyError> {
        let mut stack = vec![root];
        let mut seen: HashSet<&DeviceId> = HashSet::new();
        let mut index = 0;
        while let Some(device) = stack.pop() {
            if self.memoize && !seen.insert(device) {
                continue;
            }
            let report = match self.resolve(device)? {
                Ok(r) => r,
                Err(reason) => return Ok(Some(reason)),
            };
            if let Some(cause) = check(&report.label)? {
                return Ok(Some(DenyReason::ChainElement {
                    index,
                    device: Some(device.clone()),
                    cause: Box::new(cause),
                }));
            }
            index += 1;
            stack.extend(report.parents.iter().rev());
        }
        Ok(None)
    }

    fn unified(
        &self,
        subject: &SecurityLabel,
        root: &DeviceId,
    ) -> Result<Option<DenyReason>, PolicyError> {
        self.walk(root, |label| {
            Ok(subject
                .dominance_failure(label)?
                .map(DenyReason::from_failure))
        })
    }

    fn single_policy(
        &self,
        policy: SubPolicy,
        subject: &SecurityLabel,
        root: &DeviceId,
    ) -> Result<Option<DenyReason>, PolicyError> {
        self.walk(root, |label| {
            if label.coi().len() != subject.coi().len() {
                return Err(crate::label::LabelError::UniverseMismatch {
                    left: subject.coi().len(),
                    right: label.coi().len(),
                }
                .into());
            }
            Ok(policy.check(subject, label))
        })
    }
}
