//! Baseline: a policy set of three independent policies combined with
//! permit-unless-deny.
//!
//! Each policy looks at one component of the labels and is evaluated as its
//! own pass over the inputs. Confidentiality and reversed integrity both
//! compare ranks; they stay separate policies because that is how the
//! conjunction is written.

use serde::{Deserialize, Serialize};

use super::{Decision, DenyReason, PolicyError};
use crate::label::{LabelError, SecurityLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubPolicy {
    Blp,
    ReverseBiba,
    ChineseWall,
}

/// Evaluation order of the policy set.
pub const POLICY_SET: [SubPolicy; 3] = [
    SubPolicy::Blp,
    SubPolicy::ReverseBiba,
    SubPolicy::ChineseWall,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubPolicyDenial {
    pub policy: SubPolicy,
    pub cause: DenyReason,
}

impl SubPolicy {
    /// This policy's share of `upper >= lower`.
    pub fn check(self, upper: &SecurityLabel, lower: &SecurityLabel) -> Option<DenyReason> {
        match self {
            // no read up: the subject's level must be at least the object's
            SubPolicy::Blp => (upper.rank() > lower.rank()).then_some(DenyReason::RankFailed),
            // reversed integrity: information may only flow toward lower
            // integrity, i.e. the lower side's rank must not be below ours
            SubPolicy::ReverseBiba => {
                (lower.rank() < upper.rank()).then_some(DenyReason::RankFailed)
            }
            SubPolicy::ChineseWall => upper
                .coi()
                .iter()
                .zip(lower.coi())
                .position(|(a, b)| !a.covers(b))
                .map(|position| DenyReason::ConflictTaint { position }),
        }
    }
}

/// Permit-unless-deny: Deny if any policy denied, otherwise Permit.
pub fn combine(denials: Vec<SubPolicyDenial>) -> Decision {
    if denials.is_empty() {
        Decision::permit()
    } else {
        Decision::deny(DenyReason::PolicySet { denials })
    }
}

fn same_len(a: &SecurityLabel, b: &SecurityLabel) -> Result<(), LabelError> {
    if a.coi().len() != b.coi().len() {
        return Err(LabelError::UniverseMismatch {
            left: a.coi().len(),
            right: b.coi().len(),
        });
    }
    Ok(())
}

fn pairwise(upper: &SecurityLabel, lower: &SecurityLabel) -> Result<Decision, LabelError> {
    same_len(upper, lower)?;
    let denials = POLICY_SET
        .iter()
        .filter_map(|&policy| {
            policy
                .check(upper, lower)
                .map(|cause| SubPolicyDenial { policy, cause })
        })
        .collect();
    Ok(combine(denials))
}

pub fn evaluate_read(
    subject: &SecurityLabel,
    report: &SecurityLabel,
) -> Result<Decision, LabelError> {
    pairwise(subject, report)
}

pub fn evaluate_write(
    subject: &SecurityLabel,
    object: &SecurityLabel,
) -> Result<Decision, LabelError> {
    pairwise(object, subject)
}

pub fn evaluate_chain(
    subject: &SecurityLabel,
    chain: &[SecurityLabel],
) -> Result<Decision, PolicyError> {
    if chain.is_empty() {
        return Err(PolicyError::EmptyChain);
    }
    for label in chain {
        same_len(subject, label)?;
    }
    let mut denials = Vec::new();
    for policy in POLICY_SET {
        let failed = chain
            .iter()
            .enumerate()
            .find_map(|(index, label)| policy.check(subject, label).map(|c| (index, c)));
        if let Some((index, cause)) = failed {
            denials.push(SubPolicyDenial {
                policy,
                cause: DenyReason::ChainElement {
                    index,
                    device: None,
                    cause: Box::new(cause),
                },
            });
        }
    }
    Ok(combine(denials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::CoiEntry;

    #[test]
    fn conflict_failure_is_attributed_to_the_wall_policy() {
        let subject = SecurityLabel::new(vec![CoiEntry::member("O3")], 1);
        let report = SecurityLabel::new(vec![CoiEntry::member("O2")], 1);
        let d = evaluate_read(&subject, &report).unwrap();
        assert!(!d.is_permit());
        let Some(DenyReason::PolicySet { denials }) = d.reason else {
            panic!("expected policy-set reason");
        };
        assert_eq!(
            denials,
            vec![SubPolicyDenial {
                policy: SubPolicy::ChineseWall,
                cause: DenyReason::ConflictTaint { position: 0 }
            }]
        );
    }

    #[test]
    fn all_policies_permit() {
        let l = SecurityLabel::new(vec![CoiEntry::member("O3")], 2);
        assert!(evaluate_read(&l, &l).unwrap().is_permit());
        assert!(evaluate_write(&l, &l).unwrap().is_permit());
        assert!(evaluate_chain(&l, &[l.clone(), l.clone()])
            .unwrap()
            .is_permit());
    }

    #[test]
    fn rank_failure_is_reported_by_both_rank_policies() {
        let subject = SecurityLabel::new(vec![], 2);
        let report = SecurityLabel::new(vec![], 1);
        let Some(DenyReason::PolicySet { denials }) =
            evaluate_read(&subject, &report).unwrap().reason
        else {
            panic!()
        };
        let policies: Vec<_> = denials.iter().map(|d| d.policy).collect();
        assert_eq!(policies, vec![SubPolicy::Blp, SubPolicy::ReverseBiba]);
    }
}
