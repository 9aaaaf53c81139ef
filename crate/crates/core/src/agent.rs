//! Per-agent state machine: merges payloads per key, keeps a local history
//! and emits new contributions whose parents it has already observed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contribution::{make_contribution, validate_contribution, AgentId, Contribution, ContributionError, Finding, Rid};
use crate::dag::{DagError, InsertOutcome, ProvenanceDag};
use crate::semilattice::{join, join_all, SpaceTag, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("agent {agent} does not subscribe to key `{key}`")]
    NotSubscribed { agent: AgentId, key: String },
    #[error(transparent)]
    Contribution(#[from] ContributionError),
}

/// How a new contribution picks its parents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParentSelection {
    Empty,
    Frontier,
    Explicit(BTreeSet<Rid>),
}

/// What happened to a received record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Receipt {
    /// First sighting; the payload was merged.
    Merged,
    /// Merged, but some parents have not arrived yet.
    Buffered,
    /// Already observed; nothing changed.
    Duplicate,
    /// Same rid as an observed record with different content. The first
    /// record is kept.
    Collision(Rid),
    /// Accepting the record would close a cycle. It is not merged.
    Cycle(Rid, Rid),
    /// The record does not hash to its rid. Only reported when digests are
    /// checked.
    Tampered(Rid),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    id: AgentId,
    subscriptions: BTreeMap<String, SpaceTag>,
    observed: BTreeSet<Rid>,
    dag: ProvenanceDag,
    state: BTreeMap<String, Value>,
    next_seq: u64,
    arrivals: Vec<Rid>,
    verify_digests: bool,
    findings: Vec<Receipt>,
}

impl AgentState {
    pub fn new(id: AgentId, subscriptions: BTreeMap<String, SpaceTag>) -> Self {
        AgentState {
            id,
            subscriptions,
            observed: BTreeSet::new(),
            dag: ProvenanceDag::new(),
            state: BTreeMap::new(),
            next_seq: 0,
            arrivals: Vec::new(),
            verify_digests: true,
            findings: Vec::new(),
        }
    }

    /// Receivers in violation runs skip digest checks so forged records
    /// reach the history instead of being rejected at the door.
    pub(crate) fn set_verify_digests(&mut self, on: bool) {
        self.verify_digests = on;
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn subscriptions(&self) -> &BTreeMap<String, SpaceTag> {
        &self.subscriptions
    }

    pub fn subscribes(&self, key: &str) -> bool {
        self.subscriptions.contains_key(key)
    }

    pub fn observed(&self) -> &BTreeSet<Rid> {
        &self.observed
    }

    pub fn dag(&self) -> &ProvenanceDag {
        &self.dag
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Rids in the order they were first observed, own contributions included.
    pub fn arrivals(&self) -> &[Rid] {
        &self.arrivals
    }

    /// Collisions, cycles and digest mismatches seen so far.
    pub fn findings(&self) -> &[Receipt] {
        &self.findings
    }

    /// `M_i(k)`; bottom of the key's space when nothing was observed.
    pub fn value(&self, key: &str) -> Result<Value, AgentError> {
        let space = self.space_of(key)?;
        Ok(self.state.get(key).cloned().unwrap_or_else(|| space.bottom()))
    }

    pub fn values(&self) -> BTreeMap<String, Value> {
        self.subscriptions
            .iter()
            .map(|(k, space)| (k.clone(), self.state.get(k).cloned().unwrap_or_else(|| space.bottom())))
            .collect()
    }

    /// Recomputes `M_i(k)` from scratch as the join of observed payloads.
    pub fn recomputed_value(&self, key: &str) -> Result<Value, AgentError> {
        let space = self.space_of(key)?;
        let payloads = self.dag.known().filter(|c| c.key() == key).map(Contribution::payload);
        Ok(join_all(space, payloads).expect("payloads checked against key space on receipt"))
    }

    fn space_of(&self, key: &str) -> Result<SpaceTag, AgentError> {
        self.subscriptions
            .get(key)
            .copied()
            .ok_or_else(|| AgentError::NotSubscribed { agent: self.id, key: key.to_string() })
    }

    pub fn receive(&mut self, c: &Contribution) -> Result<Receipt, AgentError> {
        let space = self.space_of(c.key())?;
        if c.payload().space() != space {
            return Err(ContributionError::StateSpaceMismatch {
                key: c.key().to_string(),
                expected: space,
                got: c.payload().space(),
            }
            .into());
        }
        if self.verify_digests {
            let report = validate_contribution(c, &BTreeMap::new());
            if let Some(Finding::UnknownDigest { rid, .. }) = report.findings.first() {
                let receipt = Receipt::Tampered(*rid);
                self.findings.push(receipt.clone());
                return Ok(receipt);
            }
        }
        let receipt = match self.dag.insert(c.clone()) {
            Ok(InsertOutcome::Duplicate) => return Ok(Receipt::Duplicate),
            Ok(InsertOutcome::Committed(_)) => Receipt::Merged,
            Ok(InsertOutcome::Buffered) => Receipt::Buffered,
            Err(DagError::RidCollision(r)) => Receipt::Collision(r),
            Err(DagError::CycleDetected(a, b)) => Receipt::Cycle(a, b),
            Err(e) => unreachable!("insert only fails with collision or cycle: {e}"),
        };
        if matches!(receipt, Receipt::Collision(_) | Receipt::Cycle(..)) {
            self.findings.push(receipt.clone());
            return Ok(receipt);
        }
        self.observed.insert(c.rid());
        self.arrivals.push(c.rid());
        let merged = match self.state.get(c.key()) {
            Some(cur) => join(cur, c.payload()).expect("same space"),
            None => c.payload().clone(),
        };
        self.state.insert(c.key().to_string(), merged);
        Ok(receipt)
    }

    /// Observed key-`k` rids with no observed key-`k` descendant.
    pub fn local_frontier(&self, key: &str) -> Result<BTreeSet<Rid>, AgentError> {
        self.space_of(key)?;
        let known: BTreeMap<Rid, &Contribution> = self.dag.known().map(|c| (c.rid(), c)).collect();
        let mut covered = BTreeSet::new();
        for c in known.values().filter(|c| c.key() == key) {
            let mut stack: Vec<Rid> = c.parents().iter().copied().collect();
            while let Some(r) = stack.pop() {
                if let Some(p) = known.get(&r) {
                    if covered.insert(r) {
                        stack.extend(p.parents().iter().copied());
                    }
                }
            }
        }
        Ok(known
            .values()
            .filter(|c| c.key() == key && !covered.contains(&c.rid()))
            .map(|c| c.rid())
            .collect())
    }

    /// Creates a contribution, merges it locally and returns it for sending.
    pub fn contribute(&mut self, key: &str, payload: Value, parents: ParentSelection) -> Result<Contribution, AgentError> {
        let space = self.space_of(key)?;
        let parents = match parents {
            ParentSelection::Empty => BTreeSet::new(),
            ParentSelection::Frontier => self.local_frontier(key)?,
            ParentSelection::Explicit(set) => set,
        };
        let c = make_contribution(self.id, self.next_seq, key, parents, payload, space, &self.observed)?;
        self.next_seq += 1;
        self.receive(&c)?;
        Ok(c)
    }

    /// Emits a record built outside the lawful constructor.
    pub(crate) fn emit_forged(&mut self, c: Contribution) -> Result<Receipt, AgentError> {
        self.next_seq = self.next_seq.max(c.creator_seq() + 1);
        self.receive(&c)
    }
}
