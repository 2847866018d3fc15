//! Security labels over the unified confidentiality / integrity / conflict lattice.
//!
//! A label pairs a conflict-of-interest vector (one entry per COI set in the
//! governing [`CoiUniverse`]) with a single integrity rank from an
//! [`IntegrityLadder`]. Rank 1 is system high; rank `q` is the public root of
//! the calibration hierarchy. COI positions are zero-based indices into the
//! universe.
//!
//! Canonical text form, used on the wire and in the event log:
//!
//! ```text
//! {coi:[_,*,"O2"], rank:2}
//! ```
//!
//! `_` is bottom (no information from that set), `*` is tainted (information
//! from two or more members) and a quoted string is a single member facility.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ids::FacilityId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("label has {found} COI entries, universe has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("COI entry at position {0} names a facility outside that set")]
    UnknownFacility(usize),
    #[error("rank {rank} outside 1..={levels}")]
    RankOutOfRange { rank: u32, levels: u32 },
    #[error("labels come from different universes ({left} vs {right} COI positions)")]
    UniverseMismatch { left: usize, right: usize },
    #[error("COI set at position {0} is empty")]
    EmptyCoiSet(usize),
    #[error("an integrity ladder needs at least one level")]
    EmptyLadder,
    #[error("malformed label text at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

/// One conflict-of-interest set: facilities in direct competition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoiSet {
    members: Vec<FacilityId>,
}

impl CoiSet {
    pub fn members(&self) -> &[FacilityId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Linear membership scan. Sets stay small and this is the same bag
    /// lookup an attribute-based PDP performs.
    pub fn contains(&self, facility: &FacilityId) -> bool {
        self.members.iter().any(|m| m == facility)
    }
}

/// The global, ordered list of COI sets. Position `j` names the same set for
/// the lifetime of the universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoiUniverse {
    sets: Vec<CoiSet>,
    facility_index: HashMap<FacilityId, Vec<usize>>,
}

impl CoiUniverse {
    pub fn new<I, S, F>(sets: I) -> Result<Self, LabelError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = F>,
        F: Into<FacilityId>,
    {
        let mut out = Vec::new();
        let mut facility_index: HashMap<FacilityId, Vec<usize>> = HashMap::new();
        for (pos, set) in sets.into_iter().enumerate() {
            let mut members: Vec<FacilityId> = Vec::new();
            for f in set {
                let f = f.into();
                if !members.contains(&f) {
                    members.push(f);
                }
            }
            if members.is_empty() {
                return Err(LabelError::EmptyCoiSet(pos));
            }
            for f in &members {
                facility_index.entry(f.clone()).or_default().push(pos);
            }
            out.push(CoiSet { members });
        }
        Ok(Self {
            sets: out,
            facility_index,
        })
    }

    pub fn empty() -> Self {
        Self {
            sets: Vec::new(),
            facility_index: HashMap::new(),
        }
    }

    /// Number of COI sets, `n`.
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[CoiSet] {
        &self.sets
    }

    pub fn set(&self, position: usize) -> Option<&CoiSet> {
        self.sets.get(position)
    }

    pub fn contains(&self, position: usize, facility: &FacilityId) -> bool {
        self.sets
            .get(position)
            .is_some_and(|s| s.contains(facility))
    }

    /// Positions of every COI set the facility belongs to (may be several).
    pub fn positions_of(&self, facility: &FacilityId) -> &[usize] {
        self.facility_index
            .get(facility)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Every facility mentioned by some set, sorted.
    pub fn facilities(&self) -> Vec<FacilityId> {
        let mut all: Vec<_> = self.facility_index.keys().cloned().collect();
        all.sort();
        all
    }

    /// Raw membership lists, in position order.
    pub fn to_member_lists(&self) -> Vec<Vec<FacilityId>> {
        self.sets.iter().map(|s| s.members.clone()).collect()
    }
}

impl Serialize for CoiUniverse {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.sets.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoiUniverse {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let sets = Vec::<Vec<FacilityId>>::deserialize(deserializer)?;
        CoiUniverse::new(sets).map_err(serde::de::Error::custom)
    }
}

/// Integrity levels `1..=q`. Rank 1 is the highest integrity and
/// confidentiality; rank `q` is the public root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct IntegrityLadder {
    levels: u32,
}

impl IntegrityLadder {
    pub fn new(levels: u32) -> Result<Self, LabelError> {
        if levels == 0 {
            return Err(LabelError::EmptyLadder);
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn system_high_rank(&self) -> u32 {
        1
    }

    pub fn root_rank(&self) -> u32 {
        self.levels
    }

    pub fn contains(&self, rank: u32) -> bool {
        (1..=self.levels).contains(&rank)
    }

    /// Clamp an arbitrary level number onto the ladder.
    pub fn clamp(&self, rank: u32) -> u32 {
        rank.clamp(1, self.levels)
    }
}

impl TryFrom<u32> for IntegrityLadder {
    type Error = LabelError;

    fn try_from(levels: u32) -> Result<Self, Self::Error> {
        Self::new(levels)
    }
}

impl From<IntegrityLadder> for u32 {
    fn from(l: IntegrityLadder) -> u32 {
        l.levels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CoiEntry {
    /// No information from any member of this set.
    Bottom,
    /// Information from at least two members of this set.
    Tainted,
    /// Information from exactly this member.
    Member(FacilityId),
}

impl CoiEntry {
    pub fn member(f: impl Into<FacilityId>) -> Self {
        CoiEntry::Member(f.into())
    }

    /// The per-position dominance clause: `self` covers `other` when they
    /// agree, `other` is bottom, or `self` is tainted.
    #[inline]
    pub fn covers(&self, other: &CoiEntry) -> bool {
        matches!(other, CoiEntry::Bottom) || matches!(self, CoiEntry::Tainted) || self == other
    }

    pub fn join(&self, other: &CoiEntry) -> CoiEntry {
        match (self, other) {
            (CoiEntry::Bottom, x) | (x, CoiEntry::Bottom) => x.clone(),
            (CoiEntry::Tainted, _) | (_, CoiEntry::Tainted) => CoiEntry::Tainted,
            (CoiEntry::Member(a), CoiEntry::Member(b)) if a == b => self.clone(),
            _ => CoiEntry::Tainted,
        }
    }
}

/// Where a dominance check first failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominanceFailure {
    Position(usize),
    Rank,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SecurityLabel {
    coi: Vec<CoiEntry>,
    rank: u32,
}

impl SecurityLabel {
    /// Builds a label without checking it against a universe; see
    /// [`validate_label`].
    pub fn new(coi: Vec<CoiEntry>, rank: u32) -> Self {
        Self { coi, rank }
    }

    /// All bottom, root rank. Dominated by every label.
    pub fn bottom(universe: &CoiUniverse, ladder: &IntegrityLadder) -> Self {
        Self {
            coi: vec![CoiEntry::Bottom; universe.len()],
            rank: ladder.root_rank(),
        }
    }

    /// All tainted, rank 1. Dominates every label.
    pub fn system_high(universe: &CoiUniverse, _ladder: &IntegrityLadder) -> Self {
        Self {
            coi: vec![CoiEntry::Tainted; universe.len()],
            rank: 1,
        }
    }

    /// The label a technician at `facility` carries: a member entry at every
    /// set containing the facility, bottom elsewhere.
    pub fn for_facility(universe: &CoiUniverse, facility: &FacilityId, rank: u32) -> Self {
        let mut coi = vec![CoiEntry::Bottom; universe.len()];
        for &pos in universe.positions_of(facility) {
            coi[pos] = CoiEntry::Member(facility.clone());
        }
        Self { coi, rank }
    }

    pub fn coi(&self) -> &[CoiEntry] {
        &self.coi
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn with_rank(&self, rank: u32) -> Self {
        Self {
            coi: self.coi.clone(),
            rank,
        }
    }

    fn same_universe(&self, other: &SecurityLabel) -> Result<(), LabelError> {
        if self.coi.len() != other.coi.len() {
            return Err(LabelError::UniverseMismatch {
                left: self.coi.len(),
                right: other.coi.len(),
            });
        }
        Ok(())
    }

    /// First clause of `self >= other` that fails, COI positions in order
    /// before the rank.
    pub fn dominance_failure(
        &self,
        other: &SecurityLabel,
    ) -> Result<Option<DominanceFailure>, LabelError> {
        self.same_universe(other)?;
        if let Some(pos) = self
            .coi
            .iter()
            .zip(&other.coi)
            .position(|(a, b)| !a.covers(b))
        {
            return Ok(Some(DominanceFailure::Position(pos)));
        }
        if self.rank > other.rank {
            return Ok(Some(DominanceFailure::Rank));
        }
        Ok(None)
    }

    pub fn dominates(&self, other: &SecurityLabel) -> Result<bool, LabelError> {
        Ok(self.dominance_failure(other)?.is_none())
    }

    /// Least upper bound.
    pub fn join(&self, other: &SecurityLabel) -> Result<SecurityLabel, LabelError> {
        self.same_universe(other)?;
        Ok(SecurityLabel {
            coi: self
                .coi
                .iter()
                .zip(&other.coi)
                .map(|(a, b)| a.join(b))
                .collect(),
            rank: self.rank.min(other.rank),
        })
    }
}

pub fn make_bottom(universe: &CoiUniverse, ladder: &IntegrityLadder) -> SecurityLabel {
    SecurityLabel::bottom(universe, ladder)
}

pub fn make_system_high(universe: &CoiUniverse, ladder: &IntegrityLadder) -> SecurityLabel {
    SecurityLabel::system_high(universe, ladder)
}

/// `l1 >= l2`.
pub fn dominates(l1: &SecurityLabel, l2: &SecurityLabel) -> Result<bool, LabelError> {
    l1.dominates(l2)
}

pub fn join(l1: &SecurityLabel, l2: &SecurityLabel) -> Result<SecurityLabel, LabelError> {
    l1.join(l2)
}

/// Checks vector length, member validity and rank range, reporting the first
/// violation in that order.
pub fn validate_label(
    label: &SecurityLabel,
    universe: &CoiUniverse,
    ladder: &IntegrityLadder,
) -> Result<(), LabelError> {
    if label.coi.len() != universe.len() {
        return Err(LabelError::LengthMismatch {
            expected: universe.len(),
            found: label.coi.len(),
        });
    }
    for (pos, entry) in label.coi.iter().enumerate() {
        if let CoiEntry::Member(f) = entry {
            if !universe.contains(pos, f) {
                return Err(LabelError::UnknownFacility(pos));
            }
        }
    }
    if !ladder.contains(label.rank) {
        return Err(LabelError::RankOutOfRange {
            rank: label.rank,
            levels: ladder.levels(),
        });
    }
    Ok(())
}

impl fmt::Display for SecurityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{coi:[")?;
        for (i, entry) in self.coi.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match entry {
                CoiEntry::Bottom => f.write_str("_")?,
                CoiEntry::Tainted => f.write_str("*")?,
                CoiEntry::Member(id) => {
                    let quoted = serde_json::to_string(id.as_str()).map_err(|_| fmt::Error)?;
                    f.write_str(&quoted)?;
                }
            }
        }
        write!(f, "], rank:{}}}", self.rank)
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, LabelError> {
        Err(LabelError::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn expect(&mut self, token: &str) -> Result<(), LabelError> {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            self.fail(format!("expected `{token}`"))
        }
    }

    fn entry(&mut self) -> Result<CoiEntry, LabelError> {
        let rest = self.rest();
        if rest.starts_with('_') {
            self.pos += 1;
            return Ok(CoiEntry::Bottom);
        }
        if rest.starts_with('*') {
            self.pos += 1;
            return Ok(CoiEntry::Tainted);
        }
        if !rest.starts_with('"') {
            return self.fail("expected `_`, `*` or a quoted facility id");
        }
        let bytes = rest.as_bytes();
        let mut i = 1;
        loop {
            match bytes.get(i) {
                None => return self.fail("unterminated facility id"),
                Some(b'\\') => i += 2,
                Some(b'"') => break,
                Some(_) => i += 1,
            }
        }
        let token = &rest[..=i];
        let id: String = match serde_json::from_str(token) {
            Ok(id) => id,
            Err(e) => return self.fail(format!("bad facility id: {e}")),
        };
        // Only the canonical quoting round-trips; reject alternate escapes.
        if serde_json::to_string(&id).ok().as_deref() != Some(token) {
            return self.fail("facility id is not canonically quoted");
        }
        self.pos += token.len();
        Ok(CoiEntry::Member(FacilityId::new(id)))
    }

    fn rank(&mut self) -> Result<u32, LabelError> {
        let digits = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        let text = &self.rest()[..digits];
        if digits == 0 || (digits > 1 && text.starts_with('0')) {
            return self.fail("rank must be a canonical decimal");
        }
        let Ok(rank) = text.parse() else {
            return self.fail("rank does not fit in 32 bits");
        };
        self.pos += digits;
        Ok(rank)
    }
}

impl FromStr for SecurityLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor { src: s, pos: 0 };
        cur.expect("{coi:[")?;
        let mut coi = Vec::new();
        if !cur.rest().starts_with(']') {
            loop {
                coi.push(cur.entry()?);
                if cur.rest().starts_with(',') {
                    cur.pos += 1;
                } else {
                    break;
                }
            }
        }
        cur.expect("], rank:")?;
        let rank = cur.rank()?;
        cur.expect("}")?;
        if cur.pos != s.len() {
            return cur.fail("trailing input");
        }
        Ok(SecurityLabel { coi, rank })
    }
}

impl Serialize for SecurityLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SecurityLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
