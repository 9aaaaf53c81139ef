//! Immutable contribution records and their content-addressed identifiers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::semilattice::{SpaceTag, Value};

/// Name of the digest used for rids. Recorded in run manifests and log headers.
pub const DIGEST_NAME: &str = "sha256";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContributionError {
    #[error("parent {parent} has not been observed by agent {creator}")]
    CausalViolation { creator: AgentId, parent: Rid },
    #[error("payload of space {got} does not match space {expected} bound to key `{key}`")]
    StateSpaceMismatch { key: String, expected: SpaceTag, got: SpaceTag },
    #[error("invalid rid `{0}`")]
    InvalidRid(String),
    #[error("agent id must be at least 1")]
    InvalidAgent,
}

/// 32-byte contribution identifier, displayed as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rid([u8; 32]);

impl Rid {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Rid(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// First eight hex digits, for tables and traces.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for Rid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Rid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rid({})", self.short())
    }
}

impl FromStr for Rid {
    type Err = ContributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|_| ContributionError::InvalidRid(s.to_string()))?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| ContributionError::InvalidRid(s.to_string()))?;
        Ok(Rid(arr))
    }
}

impl Serialize for Rid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Agent index, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(u32);

impl AgentId {
    pub fn new(id: u32) -> Result<Self, ContributionError> {
        if id == 0 {
            Err(ContributionError::InvalidAgent)
        } else {
            Ok(AgentId(id))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based index, for dense per-agent tables.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        AgentId(i as u32 + 1)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An immutable contribution. There is no mutator: all fields are fixed at
/// construction and only readable afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Contribution {
    rid: Rid,
    parents: BTreeSet<Rid>,
    payload: Value,
    key: String,
    creator: AgentId,
    creator_seq: u64,
}

impl Contribution {
    pub fn rid(&self) -> Rid {
        self.rid
    }

    pub fn parents(&self) -> &BTreeSet<Rid> {
        &self.parents
    }

    pub fn payload(&self) -> &Value {
        &self.payload
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn creator(&self) -> AgentId {
        self.creator
    }

    pub fn creator_seq(&self) -> u64 {
        self.creator_seq
    }

    /// Digest the lawful scheme would assign to this record's content.
    pub fn recompute_rid(&self) -> Rid {
        content_rid(self.creator, self.creator_seq, &self.key, &self.parents, &self.payload)
    }

    /// Everything except the rid is equal.
    pub fn same_content(&self, other: &Contribution) -> bool {
        self.creator == other.creator
            && self.creator_seq == other.creator_seq
            && self.key == other.key
            && self.parents == other.parents
            && self.payload == other.payload
    }

    /// Assembles a record with a caller-chosen rid. Only the log decoder and
    /// the violation injectors use this; lawful code goes through
    /// [`make_contribution`].
    pub(crate) fn assemble(
        rid: Rid,
        creator: AgentId,
        creator_seq: u64,
        key: String,
        parents: BTreeSet<Rid>,
        payload: Value,
    ) -> Self {
        Contribution { rid, parents, payload, key, creator, creator_seq }
    }
}

/// The lawful content-addressed rid:
/// `sha256(creator ‖ seq ‖ key ‖ sorted parents ‖ canonical payload)`, every
/// variable-length field length-prefixed with a big-endian `u32`.
pub fn content_rid(
    creator: AgentId,
    creator_seq: u64,
    key: &str,
    parents: &BTreeSet<Rid>,
    payload: &Value,
) -> Rid {
    let mut h = Sha256::new();
    h.update(creator.get().to_be_bytes());
    h.update(creator_seq.to_be_bytes());
    h.update((key.len() as u32).to_be_bytes());
    h.update(key.as_bytes());
    h.update((parents.len() as u32).to_be_bytes());
    for p in parents {
        h.update(p.as_bytes());
    }
    let bytes = payload.canonical_bytes();
    h.update((bytes.len() as u32).to_be_bytes());
    h.update(&bytes);
    Rid(h.finalize().into())
}

/// Lawful constructor. Enforces that every parent was already observed by
/// the creator and that the payload lives in the key's state space.
pub fn make_contribution(
    creator: AgentId,
    creator_seq: u64,
    key: &str,
    parents: BTreeSet<Rid>,
    payload: Value,
    expected_space: SpaceTag,
    observed: &BTreeSet<Rid>,
) -> Result<Contribution, ContributionError> {
    if payload.space() != expected_space {
        return Err(ContributionError::StateSpaceMismatch {
            key: key.to_string(),
            expected: expected_space,
            got: payload.space(),
        });
    }
    if let Some(p) = parents.iter().find(|p| !observed.contains(p)) {
        return Err(ContributionError::CausalViolation { creator, parent: *p });
    }
    let rid = content_rid(creator, creator_seq, key, &parents, &payload);
    Ok(Contribution::assemble(rid, creator, creator_seq, key.to_string(), parents, payload))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    /// The rid is already known with different content.
    RidCollision { rid: Rid },
    SelfParent { rid: Rid },
    /// The rid is not the digest of the record's content.
    UnknownDigest { rid: Rid, recomputed: Rid },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::RidCollision { rid } => write!(f, "RidCollision: {rid}"),
            Finding::SelfParent { rid } => write!(f, "SelfParent: {rid}"),
            Finding::UnknownDigest { rid, recomputed } => {
                write!(f, "UnknownDigest: {rid} (content hashes to {recomputed})")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_collision(&self) -> bool {
        self.findings.iter().any(|f| matches!(f, Finding::RidCollision { .. }))
    }
}

/// Receiver-side checks against the contributions already known.
pub fn validate_contribution(c: &Contribution, known: &BTreeMap<Rid, Contribution>) -> ValidationReport {
    let mut findings = Vec::new();
    if let Some(existing) = known.get(&c.rid) {
        if !existing.same_content(c) {
            findings.push(Finding::RidCollision { rid: c.rid });
        }
    }
    if c.parents.contains(&c.rid) {
        findings.push(Finding::SelfParent { rid: c.rid });
    }
    let recomputed = c.recompute_rid();
    if recomputed != c.rid {
        findings.push(Finding::UnknownDigest { rid: c.rid, recomputed });
    }
    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(i: u32) -> AgentId {
        AgentId::new(i).unwrap()
    }

    #[test]
    fn root_contribution() {
        let c = make_contribution(a(1), 0, "k", BTreeSet::new(), Value::gset(["x"]), SpaceTag::Gset, &BTreeSet::new())
            .unwrap();
        assert!(c.parents().is_empty());
        assert_eq!(c.rid(), c.recompute_rid());
    }

    #[test]
    fn chain_contribution_and_causal_violation() {
        let x = make_contribution(a(1), 0, "k", BTreeSet::new(), Value::gset(["x"]), SpaceTag::Gset, &BTreeSet::new())
            .unwrap();
        let observed = BTreeSet::from([x.rid()]);
        let y = make_contribution(
            a(2),
            0,
            "k",
            BTreeSet::from([x.rid()]),
            Value::gset(["y"]),
            SpaceTag::Gset,
            &observed,
        )
        .unwrap();
        assert_eq!(y.parents(), &observed);

        let err = make_contribution(
            a(2),
            0,
            "k",
            BTreeSet::from([x.rid()]),
            Value::gset(["y"]),
            SpaceTag::Gset,
            &BTreeSet::new(),
        )
        .unwrap_err();
        assert_eq!(err, ContributionError::CausalViolation { creator: a(2), parent: x.rid() });
    }

    #[test]
    fn space_mismatch() {
        let err = make_contribution(a(1), 0, "k", BTreeSet::new(), Value::Maxint(1), SpaceTag::Gset, &BTreeSet::new())
            .unwrap_err();
        assert!(matches!(err, ContributionError::StateSpaceMismatch { .. }));
    }

    #[test]
    fn rid_is_deterministic() {
        let mk = || {
            make_contribution(a(3), 7, "key", BTreeSet::new(), Value::Maxint(9), SpaceTag::Maxint, &BTreeSet::new())
                .unwrap()
        };
        assert_eq!(mk(), mk());
        let other =
            make_contribution(a(3), 8, "key", BTreeSet::new(), Value::Maxint(9), SpaceTag::Maxint, &BTreeSet::new())
                .unwrap();
        assert_ne!(mk().rid(), other.rid());
    }

    #[test]
    fn validation_findings() {
        let known = BTreeMap::new();
        let c = make_contribution(a(1), 0, "k", BTreeSet::new(), Value::gset(["a"]), SpaceTag::Gset, &BTreeSet::new())
            .unwrap();
        assert!(validate_contribution(&c, &known).is_clean());

        // same rid, different payload
        let forged = Contribution::assemble(c.rid(), a(2), 0, "k".into(), BTreeSet::new(), Value::gset(["b"]));
        let known = BTreeMap::from([(c.rid(), c.clone())]);
        let report = validate_contribution(&forged, &known);
        assert!(report.has_collision());

        // parents replaced after the fact
        let other = Rid::from_bytes([9; 32]);
        let mutated = Contribution::assemble(c.rid(), a(1), 0, "k".into(), BTreeSet::from([other]), Value::gset(["a"]));
        let report = validate_contribution(&mutated, &BTreeMap::new());
        assert_eq!(
            report.findings,
            vec![Finding::UnknownDigest { rid: c.rid(), recomputed: mutated.recompute_rid() }]
        );

        let selfish = Contribution::assemble(c.rid(), a(1), 0, "k".into(), BTreeSet::from([c.rid()]), Value::gset(["a"]));
        assert!(validate_contribution(&selfish, &BTreeMap::new())
            .findings
            .contains(&Finding::SelfParent { rid: c.rid() }));
    }

    #[test]
    fn rid_parse_display() {
        let r = Rid::from_bytes([0xab; 32]);
        assert_eq!(r.to_string().len(), 64);
        assert_eq!(r.to_string().parse::<Rid>().unwrap(), r);
        assert!("zz".parse::<Rid>().is_err());
        assert!(AgentId::new(0).is_err());
    }
}
