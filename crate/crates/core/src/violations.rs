//! Axiom removal, one at a time, and the failures each removal produces.
//!
//! A violation run executes a scenario twice from the same initial state:
//! once with seed `s1` and oldest-first processing of simultaneous
//! deliveries, once with seed `s2` and newest-first. The canonical
//! scenarios are built so that these two schedules are exactly the two
//! interleavings that expose each failure, which makes every verdict
//! deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentState;
use crate::contribution::{content_rid, AgentId, Contribution, Rid};
use crate::dag::{isomorphic, DagError};
use crate::network::{Injector, NetworkConfig, Simulation};
use crate::policy::{DeliveryOrder, OperationalPolicy};
use crate::record::ExecutionRecord;
use crate::scenario::{Intent, KeySpec, ParentRule, Scenario, ScenarioError};
use crate::semilattice::{SpaceTag, StateSpaceRegistry, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationMode {
    /// Delivery is not guaranteed.
    NoFairness,
    /// Payloads merge by overwrite instead of join.
    NonSemilattice,
    /// Rids ignore the creator, so distinct contributions can share one.
    DuplicateRid,
    /// Parent sets are rewritten after the rid is fixed.
    MutableParents,
    /// Parents may name contributions that were never observed.
    CausalForgery,
}

impl ViolationMode {
    pub const ALL: [ViolationMode; 5] = [
        ViolationMode::NoFairness,
        ViolationMode::NonSemilattice,
        ViolationMode::DuplicateRid,
        ViolationMode::MutableParents,
        ViolationMode::CausalForgery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationMode::NoFairness => "no-fairness",
            ViolationMode::NonSemilattice => "non-semilattice",
            ViolationMode::DuplicateRid => "duplicate-rid",
            ViolationMode::MutableParents => "mutable-parents",
            ViolationMode::CausalForgery => "causal-forgery",
        }
    }

    /// Number of the axiom this mode removes.
    pub fn axiom(self) -> u8 {
        self as u8 + 1
    }

    pub fn axiom_name(self) -> &'static str {
        match self {
            ViolationMode::NoFairness => "Weak Fairness",
            ViolationMode::NonSemilattice => "Semilattice Payloads",
            ViolationMode::DuplicateRid => "Unique Identity",
            ViolationMode::MutableParents => "Metadata Immutability",
            ViolationMode::CausalForgery => "Causal Integrity",
        }
    }

    /// The failure this mode must produce on its canonical scenario.
    pub fn expected(self) -> Classification {
        match self {
            ViolationMode::NoFairness | ViolationMode::NonSemilattice => Classification::ValueDivergence,
            ViolationMode::DuplicateRid => Classification::IllDefinedGraph,
            ViolationMode::MutableParents => Classification::StructuralAmbiguity,
            ViolationMode::CausalForgery => Classification::CycleDetected,
        }
    }

    /// The hand-built scenario that forces this mode's failure.
    pub fn canonical_scenario(self) -> Scenario {
        match self {
            ViolationMode::NoFairness => no_fairness_scenario(),
            ViolationMode::NonSemilattice => overwrite_scenario(),
            ViolationMode::DuplicateRid => duplicate_rid_scenario(),
            ViolationMode::MutableParents => mutable_parents_scenario(),
            ViolationMode::CausalForgery => forgery_scenario(),
        }
    }

    pub fn injector(self) -> ModeInjector {
        ModeInjector(self)
    }
}

impl fmt::Display for ViolationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ViolationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ViolationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown violation mode `{s}`"))
    }
}

/// Lawful runs or runs with one axiom removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Regime {
    Lawful,
    Violation(ViolationMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Classification {
    Consistent,
    /// Same structure, but final states differ between agents or runs.
    ValueDivergence,
    /// Both histories are well-formed but not isomorphic.
    StructuralAmbiguity,
    /// Two records claim one rid, so the vertex set is not defined.
    IllDefinedGraph,
    CycleDetected,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Consistent => "Consistent",
            Classification::ValueDivergence => "ValueDivergence",
            Classification::StructuralAmbiguity => "StructuralAmbiguity",
            Classification::IllDefinedGraph => "IllDefinedGraph",
            Classification::CycleDetected => "CycleDetected",
        })
    }
}

/// The injector for one mode. Receivers skip digest checks in every mode so
/// forged records reach the history.
#[derive(Debug, Clone, Copy)]
pub struct ModeInjector(ViolationMode);

impl Injector for ModeInjector {
    fn forge(&self, agent: &AgentState, intent: &Intent, _index: usize, parents: &BTreeSet<Rid>) -> Option<Contribution> {
        let seq = agent.next_seq();
        match self.0 {
            ViolationMode::NoFairness | ViolationMode::NonSemilattice => None,
            ViolationMode::DuplicateRid => {
                let rid = keyed_rid(&intent.key, seq);
                Some(Contribution::assemble(rid, agent.id(), seq, intent.key.clone(), parents.clone(), intent.payload.clone()))
            }
            ViolationMode::MutableParents => {
                // The rid is fixed over the declared parents; the stored
                // parents keep only whichever of them arrived first.
                let rid = content_rid(agent.id(), seq, &intent.key, parents, &intent.payload);
                let first = agent.arrivals().iter().find(|r| parents.contains(r));
                let rewritten: BTreeSet<Rid> = first.into_iter().copied().collect();
                Some(Contribution::assemble(rid, agent.id(), seq, intent.key.clone(), rewritten, intent.payload.clone()))
            }
            ViolationMode::CausalForgery => {
                let rid = parentless_rid(agent.id(), seq, &intent.key, &intent.payload);
                Some(Contribution::assemble(rid, agent.id(), seq, intent.key.clone(), parents.clone(), intent.payload.clone()))
            }
        }
    }

    fn predict_rid(&self, scenario: &Scenario, index: usize) -> Option<Rid> {
        if self.0 != ViolationMode::CausalForgery {
            return None;
        }
        let intent = &scenario.intents[index];
        let seq = scenario.intents[..index].iter().filter(|i| i.agent == intent.agent).count() as u64;
        Some(parentless_rid(intent.agent, seq, &intent.key, &intent.payload))
    }

    fn forward_refs(&self) -> bool {
        self.0 == ViolationMode::CausalForgery
    }

    fn verify_digests(&self) -> bool {
        false
    }

    fn registry(&self) -> StateSpaceRegistry {
        match self.0 {
            ViolationMode::NonSemilattice => StateSpaceRegistry::with_violations(),
            _ => StateSpaceRegistry::lawful(),
        }
    }
}

// rid over (key, seq) only: two creators with the same counter collide
fn keyed_rid(key: &str, seq: u64) -> Rid {
    let mut h = Sha256::new();
    h.update(b"keyed");
    h.update((key.len() as u32).to_be_bytes());
    h.update(key.as_bytes());
    h.update(seq.to_be_bytes());
    Rid::from_bytes(h.finalize().into())
}

// rid without parents, so it can be computed before the parents exist
fn parentless_rid(creator: AgentId, seq: u64, key: &str, payload: &Value) -> Rid {
    content_rid(creator, seq, key, &BTreeSet::new(), payload)
}

/// Copy of `c` with different parents and the original rid. Its digest no
/// longer matches.
pub fn reparent(c: &Contribution, parents: BTreeSet<Rid>) -> Contribution {
    Contribution::assemble(c.rid(), c.creator(), c.creator_seq(), c.key().to_string(), parents, c.payload().clone())
}

fn agent(i: u32) -> AgentId {
    AgentId::new(i).expect("nonzero")
}

fn base(name: &str, agents: u32, space: SpaceTag, intents: Vec<Intent>) -> Scenario {
    Scenario {
        name: name.into(),
        agents,
        keys: BTreeMap::from([("k".into(), KeySpec { space, subscribers: vec![] })]),
        intents,
        crashes: vec![],
        network: NetworkConfig::default(),
        policy: OperationalPolicy::default(),
    }
}

fn intent(tick: u64, a: u32, payload: Value, parents: ParentRule) -> Intent {
    Intent { tick, agent: agent(a), key: "k".into(), payload, parents }
}

// u = 1, v = 2, w = 3; w's contribution never crosses the w-v partition.
fn no_fairness_scenario() -> Scenario {
    let mut s = base("no-fairness", 3, SpaceTag::Gset, vec![intent(0, 3, Value::gset(["a_r"]), ParentRule::Empty)]);
    s.network.fairness = false;
    s.network.partition = vec![(agent(3), agent(2))];
    s
}

// Two writers at the same tick, observed by agent 3 in either order.
fn overwrite_scenario() -> Scenario {
    base(
        "non-semilattice",
        3,
        SpaceTag::OverwriteRegister,
        vec![
            intent(1, 1, Value::Overwrite(1), ParentRule::Empty),
            intent(1, 2, Value::Overwrite(2), ParentRule::Empty),
        ],
    )
}

// U = 1 and V = 2 create their first contribution on the same key.
fn duplicate_rid_scenario() -> Scenario {
    base(
        "duplicate-rid",
        3,
        SpaceTag::Gset,
        vec![
            intent(0, 1, Value::gset(["A"]), ParentRule::Empty),
            intent(0, 2, Value::gset(["B"]), ParentRule::Empty),
        ],
    )
}

// r by agent 3 declares parents p and q, which reach it at the same tick.
fn mutable_parents_scenario() -> Scenario {
    base(
        "mutable-parents",
        3,
        SpaceTag::Gset,
        vec![
            intent(1, 1, Value::gset(["p"]), ParentRule::Empty),
            intent(1, 2, Value::gset(["q"]), ParentRule::Empty),
            intent(1, 3, Value::gset(["r"]), ParentRule::Explicit(vec![0, 1])),
        ],
    )
}

// r1 and r2 name each other as parent.
fn forgery_scenario() -> Scenario {
    base(
        "causal-forgery",
        2,
        SpaceTag::Gset,
        vec![
            intent(1, 1, Value::gset(["r1"]), ParentRule::Explicit(vec![1])),
            intent(1, 2, Value::gset(["r2"]), ParentRule::Explicit(vec![0])),
        ],
    )
}

/// Per-run facts kept in a verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub seed: u64,
    pub policy: OperationalPolicy,
    pub dag: Result<usize, DagError>,
    /// Final state per agent per key.
    pub values: BTreeMap<AgentId, BTreeMap<String, Value>>,
}

#[derive(Debug, Clone)]
pub struct AmbiguityVerdict {
    pub regime: Regime,
    pub classification: Classification,
    pub runs: [RunSummary; 2],
    pub records: [ExecutionRecord; 2],
    /// `None` when a history could not be built.
    pub isomorphic: Option<bool>,
    pub detail: String,
}

/// The two policies of a trial pair.
pub fn pair_policies() -> [OperationalPolicy; 2] {
    [OperationalPolicy::fifo(), OperationalPolicy::fifo().with_delivery(DeliveryOrder::Lifo)]
}

pub fn run_violation(mode: ViolationMode, scenario: &Scenario, seeds: (u64, u64)) -> Result<AmbiguityVerdict, ScenarioError> {
    run_pair(Regime::Violation(mode), scenario, seeds)
}

/// Runs `scenario` twice under `regime` and classifies the difference.
pub fn run_pair(regime: Regime, scenario: &Scenario, seeds: (u64, u64)) -> Result<AmbiguityVerdict, ScenarioError> {
    let injector = match regime {
        Regime::Lawful => None,
        Regime::Violation(m) => Some(m.injector()),
    };
    let [p1, p2] = pair_policies();
    let run_one = |seed: u64, policy: OperationalPolicy| {
        let cfg = scenario.network.clone().with_seed(seed);
        let mut sim = Simulation::new(scenario, &cfg).policy(policy);
        if let Some(inj) = &injector {
            sim = sim.injector(inj);
        }
        sim.run()
    };
    let a = run_one(seeds.0, p1)?;
    let b = run_one(seeds.1, p2)?;
    Ok(classify(regime, a, b))
}

fn summary(rec: &ExecutionRecord) -> RunSummary {
    RunSummary {
        seed: rec.seed,
        policy: rec.policy,
        dag: rec.global_dag().map(|d| d.len()),
        values: rec.agents.iter().map(|a| (a.id(), a.values())).collect(),
    }
}

fn classify(regime: Regime, a: ExecutionRecord, b: ExecutionRecord) -> AmbiguityVerdict {
    let (ga, gb) = (a.global_dag(), b.global_dag());
    let runs = [summary(&a), summary(&b)];
    let mut isomorphic_result = None;
    let (classification, detail) = match (&ga, &gb) {
        (Err(e @ DagError::CycleDetected(..)), _) | (_, Err(e @ DagError::CycleDetected(..))) => {
            (Classification::CycleDetected, e.to_string())
        }
        (Err(e @ DagError::RidCollision(_)), _) | (_, Err(e @ DagError::RidCollision(_))) => {
            (Classification::IllDefinedGraph, e.to_string())
        }
        (Err(e), _) | (_, Err(e)) => (Classification::IllDefinedGraph, e.to_string()),
        (Ok(da), Ok(db)) => {
            let iso = isomorphic(da, db).is_some();
            isomorphic_result = Some(iso);
            if !iso {
                (Classification::StructuralAmbiguity, "histories are not isomorphic".to_string())
            } else if let Some(d) = value_divergence(&a, &b) {
                (Classification::ValueDivergence, d)
            } else {
                (Classification::Consistent, "isomorphic histories, equal states".to_string())
            }
        }
    };
    AmbiguityVerdict { regime, classification, runs, records: [a, b], isomorphic: isomorphic_result, detail }
}

// Disagreement among live relevant agents within a run, or between runs.
fn value_divergence(a: &ExecutionRecord, b: &ExecutionRecord) -> Option<String> {
    for rec in [a, b] {
        for key in rec.scenario.keys.keys() {
            let live: Vec<AgentId> = rec.live_relevant(key).into_iter().collect();
            for w in live.windows(2) {
                let (x, y) = (rec.agent(w[0]).value(key).ok()?, rec.agent(w[1]).value(key).ok()?);
                if x != y {
                    return Some(format!("seed {}: agent {} holds {x}, agent {} holds {y}", rec.seed, w[0], w[1]));
                }
            }
        }
    }
    for key in a.scenario.keys.keys() {
        for id in a.live_relevant(key) {
            let (x, y) = (a.agent(id).value(key).ok()?, b.agent(id).value(key).ok()?);
            if x != y {
                return Some(format!("agent {id} holds {x} in one run and {y} in the other"));
            }
        }
    }
    None
}

/// Seed pairs drawn from one stream.
pub fn seed_pairs(stream: u64, trials: usize) -> Vec<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    (0..trials).map(|_| (rng.next_u64(), rng.next_u64())).collect()
}

/// Fraction of trial pairs that are not `Consistent`.
pub fn ambiguity_rate(regime: Regime, scenario: &Scenario, trials: usize, stream: u64) -> Result<f64, ScenarioError> {
    assert!(trials >= 1);
    let verdicts: Result<Vec<Classification>, ScenarioError> = seed_pairs(stream, trials)
        .into_par_iter()
        .map(|seeds| run_pair(regime, scenario, seeds).map(|v| v.classification))
        .collect();
    let bad = verdicts?.into_iter().filter(|c| *c != Classification::Consistent).count();
    Ok(bad as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contribution::{validate_contribution, Finding};
    use crate::testutil::{chain, root};

    #[test]
    fn every_mode_fails_as_named() {
        for mode in ViolationMode::ALL {
            let v = run_violation(mode, &mode.canonical_scenario(), (1, 2)).unwrap();
            assert_eq!(v.classification, mode.expected(), "{mode}: {}", v.detail);
        }
    }

    #[test]
    fn overwrite_observer_sees_both_schedules() {
        let mode = ViolationMode::NonSemilattice;
        let v = run_violation(mode, &mode.canonical_scenario(), (5, 6)).unwrap();
        let observer = agent(3);
        assert_eq!(v.runs[0].values[&observer]["k"], Value::Overwrite(2));
        assert_eq!(v.runs[1].values[&observer]["k"], Value::Overwrite(1));
    }

    #[test]
    fn starved_agent_keeps_bottom() {
        let mode = ViolationMode::NoFairness;
        let v = run_violation(mode, &mode.canonical_scenario(), (0, 0)).unwrap();
        for run in &v.runs {
            assert_eq!(run.values[&agent(1)]["k"], Value::gset(["a_r"]));
            assert_eq!(run.values[&agent(2)]["k"], SpaceTag::Gset.bottom());
        }
    }

    #[test]
    fn mutable_parents_edges_differ() {
        let mode = ViolationMode::MutableParents;
        let v = run_violation(mode, &mode.canonical_scenario(), (0, 0)).unwrap();
        let parent_payloads = |rec: &ExecutionRecord| {
            let dag = rec.global_dag().unwrap();
            let r = rec.intent_rids[2].unwrap();
            dag.get(&r).unwrap().parents().iter().map(|p| dag.get(p).unwrap().payload().to_string()).collect::<Vec<_>>()
        };
        assert_eq!(parent_payloads(&v.records[0]), ["gset{p}"]);
        assert_eq!(parent_payloads(&v.records[1]), ["gset{q}"]);
        assert_eq!(v.records[0].intent_rids[2], v.records[1].intent_rids[2]);
    }

    #[test]
    fn lawful_scenarios_are_consistent() {
        for mode in ViolationMode::ALL {
            if mode == ViolationMode::NonSemilattice || mode == ViolationMode::CausalForgery {
                continue;
            }
            let mut s = mode.canonical_scenario();
            s.network.fairness = true;
            let v = run_pair(Regime::Lawful, &s, (3, 4)).unwrap();
            assert_eq!(v.classification, Classification::Consistent, "{mode}");
        }
        let s = Scenario::random(1, 5, 20);
        assert_eq!(ambiguity_rate(Regime::Lawful, &s, 8, 11).unwrap(), 0.0);
    }

    #[test]
    fn reparent_breaks_digest() {
        let a = root(1, "a");
        let b = root(2, "b");
        let c = chain(3, "c", &[&a]);
        let forged = reparent(&c, BTreeSet::from([b.rid()]));
        assert_eq!(forged.rid(), c.rid());
        let report = validate_contribution(&forged, &BTreeMap::new());
        assert!(matches!(report.findings[..], [Finding::UnknownDigest { .. }]));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in ViolationMode::ALL {
            assert_eq!(m.as_str().parse::<ViolationMode>().unwrap(), m);
        }
        assert_eq!(ViolationMode::CausalForgery.axiom(), 5);
    }
}
