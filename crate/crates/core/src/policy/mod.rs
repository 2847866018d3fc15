//! Access decisions.
//!
//! The unified engine applies the lattice rules directly: a subject may read
//! an object it dominates, may write an object that dominates it, and may
//! verify a chain only if it may read every report in it. The baseline
//! engine reaches the same outcomes by evaluating three independent
//! policies (confidentiality, reversed integrity, conflict of interest) and
//! combining them with permit-unless-deny.

pub mod baseline;
mod engine;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::DeviceId;
use crate::label::{DominanceFailure, LabelError, SecurityLabel};

pub use baseline::{SubPolicy, SubPolicyDenial};
pub use engine::{AccessRequest, Action, Engine, EngineMode, RequestTarget};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("chain verification needs at least one label")]
    EmptyChain,
    #[error("unknown resource {0}")]
    UnknownResource(String),
    #[error("subject label rejected: {0}")]
    InvalidSubject(LabelError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Permit,
    Deny,
}

/// Machine-readable cause of a Deny.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenyReason {
    /// COI clause failed at this position (unified engine).
    DominanceFailed {
        position: usize,
    },
    RankFailed,
    /// COI clause failed at this position (conflict-of-interest policy).
    ConflictTaint {
        position: usize,
    },
    ReportExpired {
        device: DeviceId,
    },
    BrokenChain {
        device: DeviceId,
    },
    /// The `index`-th label of a chain, in traversal order, was not
    /// dominated by the subject.
    ChainElement {
        index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        device: Option<DeviceId>,
        cause: Box<DenyReason>,
    },
    /// Denials from the baseline policy set, one per denying policy.
    PolicySet {
        denials: Vec<SubPolicyDenial>,
    },
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenyReason::DominanceFailed { position } => {
                write!(f, "COI position {position} not dominated")
            }
            DenyReason::RankFailed => f.write_str("rank not dominated"),
            DenyReason::ConflictTaint { position } => {
                write!(f, "conflict of interest at COI position {position}")
            }
            DenyReason::ReportExpired { device } => write!(f, "report for {device} expired"),
            DenyReason::BrokenChain { device } => write!(f, "{device} has no report"),
            DenyReason::ChainElement {
                index,
                device,
                cause,
            } => match device {
                Some(d) => write!(f, "chain element {index} ({d}): {cause}"),
                None => write!(f, "chain element {index}: {cause}"),
            },
            DenyReason::PolicySet { denials } => {
                for (i, d) in denials.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{:?}: {}", d.policy, d.cause)?;
                }
                Ok(())
            }
        }
    }
}

impl DenyReason {
    pub(crate) fn from_failure(f: DominanceFailure) -> Self {
        match f {
            DominanceFailure::Position(position) => DenyReason::DominanceFailed { position },
            DominanceFailure::Rank => DenyReason::RankFailed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub outcome: Outcome,
    pub reason: Option<DenyReason>,
    pub evaluation_time: Duration,
}

impl Decision {
    pub fn permit() -> Self {
        Self {
            outcome: Outcome::Permit,
            reason: None,
            evaluation_time: Duration::ZERO,
        }
    }

    pub fn deny(reason: DenyReason) -> Self {
        Self {
            outcome: Outcome::Deny,
            reason: Some(reason),
            evaluation_time: Duration::ZERO,
        }
    }

    pub(crate) fn from_reason(reason: Option<DenyReason>) -> Self {
        reason.map_or_else(Self::permit, Self::deny)
    }

    pub fn is_permit(&self) -> bool {
        self.outcome == Outcome::Permit
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reason {
            Some(r) => write!(f, "{:?} ({r})", self.outcome),
            None => write!(f, "{:?}", self.outcome),
        }
    }
}

/// Simple property: read iff the subject dominates the report.
pub fn evaluate_read(
    subject: &SecurityLabel,
    report: &SecurityLabel,
) -> Result<Decision, LabelError> {
    Ok(Decision::from_reason(
        subject
            .dominance_failure(report)?
            .map(DenyReason::from_failure),
    ))
}

/// Star property: write iff the object dominates the subject.
pub fn evaluate_write(
    subject: &SecurityLabel,
    object: &SecurityLabel,
) -> Result<Decision, LabelError> {
    Ok(Decision::from_reason(
        object
            .dominance_failure(subject)?
            .map(DenyReason::from_failure),
    ))
}

/// Chain verification: the subject must dominate every label in the chain.
pub fn evaluate_chain(
    subject: &SecurityLabel,
    chain: &[SecurityLabel],
) -> Result<Decision, PolicyError> {
    if chain.is_empty() {
        return Err(PolicyError::EmptyChain);
    }
    for (index, label) in chain.iter().enumerate() {
        if let Some(f) = subject.dominance_failure(label)? {
            return Ok(Decision::deny(DenyReason::ChainElement {
                index,
                device: None,
                cause: Box::new(DenyReason::from_failure(f)),
            }));
        }
    }
    Ok(Decision::permit())
}
