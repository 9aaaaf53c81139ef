//! Payload state spaces and their merge operations.
//!
//! Every key is bound to one state space. Lawful spaces are join-semilattices:
//! the merge is associative, commutative and idempotent, and every space has a
//! bottom element. The `overwrite-register` space is deliberately not a
//! semilattice; it exists so that the consequences of dropping the algebraic
//! requirement can be demonstrated.
//!
//! Values compare structurally. Every value also has a canonical byte
//! encoding (sorted set elements, big-endian fixed-width integers, sorted map
//! keys) which feeds the contribution digest, so it must never change.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemilatticeError {
    #[error("cannot merge values of different state spaces ({left} and {right})")]
    MixedStateSpace { left: SpaceTag, right: SpaceTag },
    #[error("unregistered state space `{0}`")]
    Unregistered(String),
    #[error("malformed canonical encoding for {space}: {reason}")]
    Decode { space: SpaceTag, reason: String },
}

/// Identifies a state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceTag {
    /// Grow-only set of strings, merged by union.
    Gset,
    /// Non-negative integer register, merged by max.
    Maxint,
    /// String-keyed map of grow-only sets, merged pointwise by union.
    GsetMap,
    /// Last-arrival-wins register. Not a semilattice.
    OverwriteRegister,
}

impl SpaceTag {
    pub const ALL: [SpaceTag; 4] = [
        SpaceTag::Gset,
        SpaceTag::Maxint,
        SpaceTag::GsetMap,
        SpaceTag::OverwriteRegister,
    ];

    pub const LAWFUL: [SpaceTag; 3] = [SpaceTag::Gset, SpaceTag::Maxint, SpaceTag::GsetMap];

    pub fn as_str(self) -> &'static str {
        match self {
            SpaceTag::Gset => "gset",
            SpaceTag::Maxint => "maxint",
            SpaceTag::GsetMap => "gset-map",
            SpaceTag::OverwriteRegister => "overwrite-register",
        }
    }

    /// Whether the space's merge satisfies the join-semilattice laws.
    pub fn is_lawful(self) -> bool {
        !matches!(self, SpaceTag::OverwriteRegister)
    }

    pub fn bottom(self) -> Value {
        match self {
            SpaceTag::Gset => Value::Gset(BTreeSet::new()),
            SpaceTag::Maxint => Value::Maxint(0),
            SpaceTag::GsetMap => Value::GsetMap(BTreeMap::new()),
            SpaceTag::OverwriteRegister => Value::Overwrite(0),
        }
    }

    pub fn decode(self, bytes: &[u8]) -> Result<Value, SemilatticeError> {
        let mut reader = Reader { bytes, pos: 0, space: self };
        let value = match self {
            SpaceTag::Gset => Value::Gset(reader.set()?),
            SpaceTag::Maxint => Value::Maxint(reader.u64()?),
            SpaceTag::OverwriteRegister => Value::Overwrite(reader.u64()?),
            SpaceTag::GsetMap => {
                let n = reader.u32()?;
                let mut map = BTreeMap::new();
                let mut last: Option<String> = None;
                for _ in 0..n {
                    let key = reader.string()?;
                    if last.as_ref().is_some_and(|l| *l >= key) {
                        return Err(reader.err("map keys not strictly sorted"));
                    }
                    let set = reader.set()?;
                    if set.is_empty() {
                        return Err(reader.err("empty set entry in map"));
                    }
                    last = Some(key.clone());
                    map.insert(key, set);
                }
                Value::GsetMap(map)
            }
        };
        if reader.pos != bytes.len() {
            return Err(reader.err("trailing bytes"));
        }
        Ok(value)
    }
}

impl fmt::Display for SpaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpaceTag {
    type Err = SemilatticeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SpaceTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| SemilatticeError::Unregistered(s.to_string()))
    }
}

/// An element of one of the registered state spaces.
///
/// Construct map values through [`Value::gset_map`] so that empty entries are
/// dropped; the canonical form never stores a key with an empty set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Gset(BTreeSet<String>),
    Maxint(u64),
    GsetMap(BTreeMap<String, BTreeSet<String>>),
    Overwrite(u64),
}

impl Value {
    pub fn gset<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Value::Gset(items.into_iter().map(Into::into).collect())
    }

    pub fn gset_map<I, K, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, BTreeSet<S>)>,
        K: Into<String>,
        S: Into<String> + Ord,
    {
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (k, set) in entries {
            let set: BTreeSet<String> = set.into_iter().map(Into::into).collect();
            if !set.is_empty() {
                map.entry(k.into()).or_default().extend(set);
            }
        }
        Value::GsetMap(map)
    }

    pub fn space(&self) -> SpaceTag {
        match self {
            Value::Gset(_) => SpaceTag::Gset,
            Value::Maxint(_) => SpaceTag::Maxint,
            Value::GsetMap(_) => SpaceTag::GsetMap,
            Value::Overwrite(_) => SpaceTag::OverwriteRegister,
        }
    }

    /// Canonical byte encoding. Bit-exact: contribution digests hash it.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Value::Gset(set) => put_set(&mut out, set),
            Value::Maxint(n) | Value::Overwrite(n) => out.extend_from_slice(&n.to_be_bytes()),
            Value::GsetMap(map) => {
                out.extend_from_slice(&(map.len() as u32).to_be_bytes());
                for (k, set) in map {
                    put_str(&mut out, k);
                    put_set(&mut out, set);
                }
            }
        }
        out
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn set(f: &mut fmt::Formatter<'_>, s: &BTreeSet<String>) -> fmt::Result {
            f.write_str("{")?;
            for (i, e) in s.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                f.write_str(e)?;
            }
            f.write_str("}")
        }
        match self {
            Value::Gset(s) => {
                f.write_str("gset")?;
                set(f, s)
            }
            Value::Maxint(n) => write!(f, "maxint({n})"),
            Value::Overwrite(n) => write!(f, "overwrite({n})"),
            Value::GsetMap(m) => {
                f.write_str("gset-map{")?;
                for (i, (k, s)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{k}:")?;
                    set(f, s)?;
                }
                f.write_str("}")
            }
        }
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_set(out: &mut Vec<u8>, set: &BTreeSet<String>) {
    out.extend_from_slice(&(set.len() as u32).to_be_bytes());
    for e in set {
        put_str(out, e);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    space: SpaceTag,
}

impl Reader<'_> {
    fn err(&self, reason: &str) -> SemilatticeError {
        SemilatticeError::Decode { space: self.space, reason: reason.to_string() }
    }

    fn take(&mut self, n: usize) -> Result<&[u8], SemilatticeError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| self.err("truncated"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, SemilatticeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, SemilatticeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, SemilatticeError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?.to_vec();
        String::from_utf8(raw).map_err(|_| self.err("invalid utf-8"))
    }

    fn set(&mut self) -> Result<BTreeSet<String>, SemilatticeError> {
        let n = self.u32()?;
        let mut set = BTreeSet::new();
        let mut last: Option<String> = None;
        for _ in 0..n {
            let e = self.string()?;
            if last.as_ref().is_some_and(|l| *l >= e) {
                return Err(self.err("set elements not strictly sorted"));
            }
            last = Some(e.clone());
            set.insert(e);
        }
        Ok(set)
    }
}

fn same_space(a: &Value, b: &Value) -> Result<(), SemilatticeError> {
    if a.space() == b.space() {
        Ok(())
    } else {
        Err(SemilatticeError::MixedStateSpace { left: a.space(), right: b.space() })
    }
}

/// Merges two values of the same space with that space's merge operation.
///
/// For the lawful spaces this is the least upper bound. For
/// `overwrite-register` it is [`overwrite_merge`].
pub fn join(a: &Value, b: &Value) -> Result<Value, SemilatticeError> {
    same_space(a, b)?;
    Ok(match (a, b) {
        (Value::Gset(x), Value::Gset(y)) => Value::Gset(x.union(y).cloned().collect()),
        (Value::Maxint(x), Value::Maxint(y)) => Value::Maxint(*x.max(y)),
        (Value::GsetMap(x), Value::GsetMap(y)) => {
            let mut out = x.clone();
            for (k, set) in y {
                out.entry(k.clone()).or_default().extend(set.iter().cloned());
            }
            Value::GsetMap(out)
        }
        (Value::Overwrite(x), Value::Overwrite(y)) => Value::Overwrite(overwrite_merge(*x, *y)),
        _ => unreachable!("space equality checked above"),
    })
}

/// `a ⊑ b` iff `a ⊔ b = b`.
pub fn leq(a: &Value, b: &Value) -> Result<bool, SemilatticeError> {
    Ok(join(a, b)? == *b)
}

/// Left fold of [`join`] starting at the space's bottom.
pub fn join_all<'a, I>(space: SpaceTag, values: I) -> Result<Value, SemilatticeError>
where
    I: IntoIterator<Item = &'a Value>,
{
    values.into_iter().try_fold(space.bottom(), |acc, v| join(&acc, v))
}

/// Merge of the overwrite register: the incoming value replaces the current
/// one regardless of either.
pub fn overwrite_merge(_current: u64, incoming: u64) -> u64 {
    incoming
}

/// The set of state spaces available to a run.
///
/// Lawful runs use [`StateSpaceRegistry::lawful`], which refuses the overwrite
/// register. Violation runs use [`StateSpaceRegistry::with_violations`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpaceRegistry {
    spaces: BTreeMap<&'static str, SpaceTag>,
}

impl StateSpaceRegistry {
    pub fn lawful() -> Self {
        Self::from_tags(SpaceTag::LAWFUL)
    }

    pub fn with_violations() -> Self {
        Self::from_tags(SpaceTag::ALL)
    }

    fn from_tags(tags: impl IntoIterator<Item = SpaceTag>) -> Self {
        Self { spaces: tags.into_iter().map(|t| (t.as_str(), t)).collect() }
    }

    pub fn lookup(&self, tag: &str) -> Result<SpaceTag, SemilatticeError> {
        self.spaces.get(tag).copied().ok_or_else(|| SemilatticeError::Unregistered(tag.to_string()))
    }

    pub fn contains(&self, tag: SpaceTag) -> bool {
        self.spaces.contains_key(tag.as_str())
    }

    pub fn tags(&self) -> impl Iterator<Item = SpaceTag> + '_ {
        self.spaces.values().copied()
    }

    pub fn decode(&self, tag: &str, bytes: &[u8]) -> Result<Value, SemilatticeError> {
        self.lookup(tag)?.decode(bytes)
    }
}

impl Default for StateSpaceRegistry {
    fn default() -> Self {
        Self::lawful()
    }
}
