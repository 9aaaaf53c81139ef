//! Contribution log: one JSON object per line, fixed field order.
//!
//! ```text
//! # dcs contribution log v1 digest=sha256
//! {"rid":"…","creator":1,"creatorSeq":0,"key":"k","parents":[],"stateSpaceTag":"gset","payload":"00000001…"}
//! ```
//!
//! Lines starting with `#` are comments. Parents are written sorted.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contribution::{AgentId, Contribution, ContributionError, Rid, DIGEST_NAME};
use crate::semilattice::{SemilatticeError, StateSpaceRegistry};

pub const LOG_HEADER_PREFIX: &str = "# dcs contribution log v1";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: {source}")]
    Payload { line: usize, source: SemilatticeError },
    #[error("line {line}: payload is not valid hex")]
    Hex { line: usize },
    #[error("line {line}: {source}")]
    Field { line: usize, source: ContributionError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LogRecord {
    pub rid: Rid,
    pub creator: u32,
    pub creator_seq: u64,
    pub key: String,
    pub parents: Vec<Rid>,
    pub state_space_tag: String,
    pub payload: String,
}

impl LogRecord {
    pub fn from_contribution(c: &Contribution) -> Self {
        LogRecord {
            rid: c.rid(),
            creator: c.creator().get(),
            creator_seq: c.creator_seq(),
            key: c.key().to_string(),
            parents: c.parents().iter().copied().collect(),
            state_space_tag: c.payload().space().as_str().to_string(),
            payload: hex::encode(c.payload().canonical_bytes()),
        }
    }
}

pub fn header() -> String {
    format!("{LOG_HEADER_PREFIX} digest={DIGEST_NAME}")
}

pub fn encode_line(c: &Contribution) -> String {
    serde_json::to_string(&LogRecord::from_contribution(c)).expect("log record serializes")
}

/// Writes a full log including the header line.
pub fn write_log<'a>(contributions: impl IntoIterator<Item = &'a Contribution>) -> String {
    let mut out = header();
    out.push('\n');
    for c in contributions {
        out.push_str(&encode_line(c));
        out.push('\n');
    }
    out
}

/// Parses a log. Records are taken as written: the rid is not recomputed, so
/// tampered records survive parsing and can be reported by the auditor.
pub fn read_log(text: &str, registry: &StateSpaceRegistry) -> Result<Vec<Contribution>, LogError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(trimmed).map_err(|source| LogError::Json { line, source })?;
        let bytes = hex::decode(&rec.payload).map_err(|_| LogError::Hex { line })?;
        let payload = registry
            .decode(&rec.state_space_tag, &bytes)
            .map_err(|source| LogError::Payload { line, source })?;
        let creator = AgentId::new(rec.creator).map_err(|source| LogError::Field { line, source })?;
        let parents: BTreeSet<Rid> = rec.parents.into_iter().collect();
        out.push(Contribution::assemble(rec.rid, creator, rec.creator_seq, rec.key, parents, payload));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contribution::make_contribution;
    use crate::semilattice::{SpaceTag, Value};

    #[test]
    fn round_trip() {
        let a = AgentId::new(1).unwrap();
        let x = make_contribution(a, 0, "k", BTreeSet::new(), Value::gset(["x"]), SpaceTag::Gset, &BTreeSet::new())
            .unwrap();
        let y = make_contribution(
            a,
            1,
            "k",
            BTreeSet::from([x.rid()]),
            Value::gset(["y"]),
            SpaceTag::Gset,
            &BTreeSet::from([x.rid()]),
        )
        .unwrap();
        let text = write_log([&x, &y]);
        assert!(text.starts_with("# dcs contribution log v1 digest=sha256\n"));
        let back = read_log(&text, &StateSpaceRegistry::lawful()).unwrap();
        assert_eq!(back, vec![x, y]);
    }

    #[test]
    fn field_order_is_fixed() {
        let a = AgentId::new(2).unwrap();
        let c = make_contribution(a, 3, "k", BTreeSet::new(), Value::Maxint(1), SpaceTag::Maxint, &BTreeSet::new())
            .unwrap();
        let line = encode_line(&c);
        let order = ["\"rid\"", "\"creator\"", "\"creatorSeq\"", "\"key\"", "\"parents\"", "\"stateSpaceTag\"", "\"payload\""];
        let positions: Vec<usize> = order.iter().map(|f| line.find(f).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(line.ends_with("\"payload\":\"0000000000000001\"}"));
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        let reg = StateSpaceRegistry::lawful();
        let err = read_log("# hdr\n{not json}\n", &reg).unwrap_err();
        assert!(matches!(err, LogError::Json { line: 2, .. }));
        let rid = "00".repeat(32);
        let line = format!(
            "{{\"rid\":\"{rid}\",\"creator\":1,\"creatorSeq\":0,\"key\":\"k\",\"parents\":[],\"stateSpaceTag\":\"overwrite-register\",\"payload\":\"0000000000000001\"}}"
        );
        assert!(matches!(read_log(&line, &reg), Err(LogError::Payload { line: 1, .. })));
        assert!(read_log(&line, &StateSpaceRegistry::with_violations()).is_ok());
    }
}
