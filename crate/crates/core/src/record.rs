//! What a run leaves behind: the trace, final agent states, every created
//! contribution, and a canonical artifact tree with a digest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest, Sha256};

use crate::agent::AgentState;
use crate::contribution::{AgentId, Contribution, Rid};
use crate::dag::{to_dot, to_layered_text, DagError, ProvenanceDag};
use crate::log::write_log;
use crate::policy::OperationalPolicy;
use crate::scenario::Scenario;
use crate::semilattice::{join_all, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Quiescent { events: u64, final_tick: u64 },
    /// The event budget ran out first.
    NonQuiescent { events: u64 },
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Quiescent { events, final_tick } => write!(f, "quiescent events={events} final_tick={final_tick}"),
            Outcome::NonQuiescent { events } => write!(f, "non-quiescent events={events}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceAction {
    Contribute(usize),
    Deliver(AgentId),
    /// Delivered by the fairness horizon after every copy was lost.
    Forced(AgentId),
    Drop(AgentId),
    Blocked(AgentId),
    /// Arrived at a crashed agent.
    Lost,
    Duplicate,
    Buffer,
    Collision,
    Cycle(Rid),
    Tampered,
    Crash,
    Skip(usize),
    Defer(usize),
}

impl fmt::Display for TraceAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceAction::Contribute(i) => write!(f, "contribute intent={i}"),
            TraceAction::Deliver(a) => write!(f, "deliver from={a}"),
            TraceAction::Forced(a) => write!(f, "forced from={a}"),
            TraceAction::Drop(a) => write!(f, "drop from={a}"),
            TraceAction::Blocked(a) => write!(f, "blocked from={a}"),
            TraceAction::Lost => f.write_str("lost"),
            TraceAction::Duplicate => f.write_str("duplicate"),
            TraceAction::Buffer => f.write_str("buffer"),
            TraceAction::Collision => f.write_str("collision"),
            TraceAction::Cycle(r) => write!(f, "cycle with={r}"),
            TraceAction::Tampered => f.write_str("tampered"),
            TraceAction::Crash => f.write_str("crash"),
            TraceAction::Skip(i) => write!(f, "skip intent={i}"),
            TraceAction::Defer(i) => write!(f, "defer intent={i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub tick: u64,
    pub agent: AgentId,
    pub action: TraceAction,
    pub rid: Option<Rid>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rid = self.rid.map_or_else(|| "-".to_string(), |r| r.to_string());
        write!(f, "{}\t{}\t{}\t{}", self.tick, self.agent, self.action, rid)
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionRecord {
    pub scenario: Scenario,
    pub seed: u64,
    pub policy: OperationalPolicy,
    pub trace: Vec<TraceRecord>,
    pub agents: Vec<AgentState>,
    /// Crash tick per crashed agent.
    pub crashed: BTreeMap<AgentId, u64>,
    /// Every contribution, in creation order.
    pub created: Vec<Contribution>,
    /// Rid created for each intent, if it ran.
    pub intent_rids: Vec<Option<Rid>>,
    pub outcome: Outcome,
    /// Intents still waiting for parents when the run ended.
    pub stalled: Vec<usize>,
}

impl ExecutionRecord {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        scenario: &Scenario,
        seed: u64,
        policy: OperationalPolicy,
        trace: Vec<TraceRecord>,
        agents: Vec<AgentState>,
        crashed: BTreeMap<AgentId, u64>,
        created: Vec<Contribution>,
        intent_rids: Vec<Option<Rid>>,
        outcome: Outcome,
        stalled: Vec<usize>,
    ) -> Self {
        ExecutionRecord {
            scenario: scenario.clone(),
            seed,
            policy,
            trace,
            agents,
            crashed,
            created,
            intent_rids,
            outcome,
            stalled,
        }
    }

    pub fn agent(&self, id: AgentId) -> &AgentState {
        &self.agents[id.index()]
    }

    /// `G*`, built from every created contribution.
    pub fn global_dag(&self) -> Result<ProvenanceDag, DagError> {
        ProvenanceDag::from_contributions(&self.created)
    }

    /// Relevant agents that never crashed.
    pub fn live_relevant(&self, key: &str) -> BTreeSet<AgentId> {
        self.scenario.relevant(key).into_iter().filter(|a| !self.crashed.contains_key(a)).collect()
    }

    /// Join of every created payload for `key`.
    pub fn expected_value(&self, key: &str) -> Option<Value> {
        let space = self.scenario.keys.get(key)?.space;
        join_all(space, self.created.iter().filter(|c| c.key() == key).map(Contribution::payload)).ok()
    }

    /// Propagation and convergence problems, one line each; empty when every
    /// live relevant agent observed every contribution of its keys and holds
    /// their join.
    pub fn convergence_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for key in self.scenario.keys.keys() {
            let rids: BTreeSet<Rid> = self.created.iter().filter(|c| c.key() == key).map(Contribution::rid).collect();
            let expected = self.expected_value(key);
            for a in self.live_relevant(key) {
                let agent = self.agent(a);
                let missing = rids.difference(agent.observed()).count();
                if missing > 0 {
                    out.push(format!("agent {a} key `{key}`: {missing} contribution(s) never delivered"));
                }
                let got = agent.value(key).ok();
                if got != expected {
                    out.push(format!(
                        "agent {a} key `{key}`: holds {} but the join is {}",
                        got.map_or("-".into(), |v| v.to_string()),
                        expected.as_ref().map_or("-".into(), |v| v.to_string())
                    ));
                }
            }
        }
        out
    }

    /// Deliveries per (recipient, rid), duplicates included.
    pub fn delivery_counts(&self) -> BTreeMap<(AgentId, Rid), usize> {
        let mut counts = BTreeMap::new();
        for t in &self.trace {
            if let (TraceAction::Deliver(_) | TraceAction::Forced(_), Some(r)) = (t.action, t.rid) {
                *counts.entry((t.agent, r)).or_insert(0) += 1;
            }
        }
        counts
    }

    /// File name to content. Every file is a pure function of the run.
    pub fn artifacts(&self) -> BTreeMap<String, String> {
        let mut files = BTreeMap::new();
        let mut trace = format!(
            "# scenario={} seed={} policy={}\n# tick\tagent\taction\trid\n",
            self.scenario.name, self.seed, self.policy
        );
        for t in &self.trace {
            trace.push_str(&format!("{t}\n"));
        }
        files.insert("trace.log".into(), trace);
        files.insert("contributions.log".into(), write_log(&self.created));

        let mut states = String::from("# agent\tkey\tvalue\tcrashed_at\n");
        for a in &self.agents {
            let crashed = self.crashed.get(&a.id()).map_or("-".into(), |t| t.to_string());
            for (k, v) in a.values() {
                states.push_str(&format!("{}\t{k}\t{v}\t{crashed}\n", a.id()));
            }
        }
        files.insert("states.tsv".into(), states);

        let dag_text = match self.global_dag() {
            Ok(dag) => match to_layered_text(&dag) {
                Ok(text) => {
                    files.insert("dag.dot".into(), to_dot(&dag));
                    text
                }
                Err(e) => format!("error: {e}\n"),
            },
            Err(e) => format!("error: {e}\n"),
        };
        files.insert("dag.txt".into(), dag_text);
        for a in &self.agents {
            files.insert(format!("agents/agent-{}.dot", a.id()), to_dot(a.dag()));
        }
        let mut outcome = format!("{}\n", self.outcome);
        for i in &self.stalled {
            outcome.push_str(&format!("stalled intent={i}\n"));
        }
        files.insert("outcome.txt".into(), outcome);
        files
    }

    /// sha256 over the artifact tree (names, lengths and contents).
    pub fn digest(&self) -> String {
        tree_digest(&self.artifacts())
    }
}

/// Digest of a name-to-content map, independent of where it is stored.
pub fn tree_digest(files: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (name, body) in files {
        h.update((name.len() as u64).to_be_bytes());
        h.update(name.as_bytes());
        h.update((body.len() as u64).to_be_bytes());
        h.update(body.as_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use crate::network::{run, NetworkConfig};
    use crate::scenario::Scenario;

    #[test]
    fn artifact_tree_shape() {
        let rec = run(&Scenario::concurrent(), &NetworkConfig::default()).unwrap();
        let files = rec.artifacts();
        let names: Vec<&str> = files.keys().map(String::as_str).collect();
        assert_eq!(
            names,
            [
                "agents/agent-1.dot",
                "agents/agent-2.dot",
                "contributions.log",
                "dag.dot",
                "dag.txt",
                "outcome.txt",
                "states.tsv",
                "trace.log"
            ]
        );
        assert_eq!(files["contributions.log"].lines().count(), 3);
        assert!(files["dag.txt"].starts_with("layer 0\n"));
        assert_eq!(files["dag.txt"].lines().count(), 3);
        assert!(rec.convergence_failures().is_empty());
    }

    #[test]
    fn digest_tracks_seed() {
        let s = Scenario::random(2, 5, 20);
        let a = run(&s, &s.network.clone().with_seed(1)).unwrap();
        let b = run(&s, &s.network.clone().with_seed(1)).unwrap();
        let c = run(&s, &s.network.clone().with_seed(2)).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }
}
