//! Deterministic discrete-event simulation of an unreliable network.
//!
//! Time is integer ticks. Each ordered channel (sender, recipient) owns a
//! ChaCha stream derived from the run seed, so adding an agent does not
//! disturb draws on other channels.
//!
//! A copy sent at tick `t` arrives at `t + 1 + U[0, max_reorder_delay]`. On
//! arrival it may spawn a further copy (probability `duplicate`, drawn
//! again by that copy, so the copy count is geometric) and is then lost with
//! probability `drop`. With fairness on, a check at `t + fairness_bound`
//! delivers the contribution if no copy got through, which is the finite
//! stand-in for persistent retransmission.
//!
//! Within a tick events run in class order: crashes, arrivals, fairness
//! checks, deferred sends, intents, outbox flushes.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentState, ParentSelection, Receipt};
use crate::contribution::{AgentId, Contribution, Rid};
use crate::policy::{apply_policy, DeliveryOrder, OperationalPolicy};
use crate::record::{ExecutionRecord, Outcome, TraceAction, TraceRecord};
use crate::scenario::{Intent, ParentRule, Scenario, ScenarioError};
use crate::semilattice::StateSpaceRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("invalid network config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub drop: f64,
    pub duplicate: f64,
    pub max_reorder_delay: u64,
    pub fairness: bool,
    pub fairness_bound: u64,
    pub seed: u64,
    /// Agent pairs that cannot exchange messages, in either direction.
    pub partition: Vec<(AgentId, AgentId)>,
    pub event_budget: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            drop: 0.0,
            duplicate: 0.0,
            max_reorder_delay: 0,
            fairness: true,
            fairness_bound: 10,
            seed: 0,
            partition: vec![],
            event_budget: 1_000_000,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: String| Err(NetworkError::Config(m));
        if !(0.0..=1.0).contains(&self.drop) {
            return bad(format!("drop probability {} outside [0,1]", self.drop));
        }
        // a duplicate probability of 1 would never stop copying
        if !(0.0..1.0).contains(&self.duplicate) {
            return bad(format!("duplicate probability {} outside [0,1)", self.duplicate));
        }
        if self.fairness && self.fairness_bound <= self.max_reorder_delay {
            return bad(format!(
                "fairness bound {} must exceed max reorder delay {}",
                self.fairness_bound, self.max_reorder_delay
            ));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn blocked(&self, a: AgentId, b: AgentId) -> bool {
        self.partition.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    }
}

/// Hooks through which the violation module replaces lawful behaviour.
pub trait Injector: Send + Sync {
    /// Builds the record for intent `index` instead of the lawful
    /// constructor. `parents` are the resolved parent rids.
    fn forge(&self, agent: &AgentState, intent: &Intent, index: usize, parents: &BTreeSet<Rid>) -> Option<Contribution>;

    /// Rid that intent `index` will carry, for forward references.
    fn predict_rid(&self, _scenario: &Scenario, _index: usize) -> Option<Rid> {
        None
    }

    /// Whether intents may name parents that have not been observed, or
    /// not even created yet.
    fn forward_refs(&self) -> bool {
        false
    }

    fn verify_digests(&self) -> bool {
        true
    }

    fn registry(&self) -> StateSpaceRegistry {
        StateSpaceRegistry::lawful()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Class {
    Crash,
    Arrive,
    Fairness,
    Send,
    Intent,
    Flush,
}

#[derive(Debug, Clone)]
enum Event {
    Crash(AgentId),
    Arrive(usize),
    Fairness(usize),
    Send(AgentId, Vec<usize>),
    Intent(usize),
    Flush(AgentId),
}

#[derive(Debug, Clone)]
struct Message {
    contribution: usize,
    from: AgentId,
    to: AgentId,
    delivered: bool,
}

/// Runs `scenario` under `config` with the scenario's own policy.
pub fn run(scenario: &Scenario, config: &NetworkConfig) -> Result<ExecutionRecord, ScenarioError> {
    Simulation::new(scenario, config).run()
}

pub struct Simulation<'a> {
    scenario: &'a Scenario,
    config: &'a NetworkConfig,
    policy: OperationalPolicy,
    injector: Option<&'a dyn Injector>,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, config: &'a NetworkConfig) -> Self {
        Simulation { scenario, config, policy: scenario.policy, injector: None }
    }

    pub fn policy(mut self, policy: OperationalPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn injector(mut self, injector: &'a dyn Injector) -> Self {
        self.injector = Some(injector);
        self
    }

    pub fn run(self) -> Result<ExecutionRecord, ScenarioError> {
        let registry = self.injector.map_or_else(StateSpaceRegistry::lawful, |i| i.registry());
        let forward = self.injector.is_some_and(|i| i.forward_refs());
        self.scenario.validate(&registry, forward)?;
        self.config.validate()?;
        Ok(Engine::new(self).execute())
    }
}

struct Engine<'a> {
    sim: Simulation<'a>,
    agents: Vec<AgentState>,
    crashed: BTreeMap<AgentId, u64>,
    queue: BTreeMap<(u64, Class, u64, u64), Event>,
    seq: u64,
    channels: BTreeMap<(AgentId, AgentId), ChaCha8Rng>,
    messages: Vec<Message>,
    created: Vec<Contribution>,
    intent_rids: Vec<Option<Rid>>,
    waiting: BTreeMap<AgentId, BTreeSet<usize>>,
    // the intent each agent must run before intent i, in (tick, index) order
    script_prev: Vec<Option<usize>>,
    outbox: BTreeMap<AgentId, Vec<usize>>,
    trace: Vec<TraceRecord>,
    now: u64,
}

impl<'a> Engine<'a> {
    fn new(sim: Simulation<'a>) -> Self {
        let scenario = sim.scenario;
        let verify = sim.injector.is_none_or(|i| i.verify_digests());
        let agents = scenario
            .agent_ids()
            .map(|id| {
                let mut a = AgentState::new(id, scenario.subscriptions(id));
                a.set_verify_digests(verify);
                a
            })
            .collect();
        let mut script_prev = vec![None; scenario.intents.len()];
        for id in scenario.agent_ids() {
            let mut mine: Vec<usize> = (0..scenario.intents.len()).filter(|i| scenario.intents[*i].agent == id).collect();
            mine.sort_by_key(|i| (scenario.intents[*i].tick, *i));
            for w in mine.windows(2) {
                script_prev[w[1]] = Some(w[0]);
            }
        }
        let mut e = Engine {
            sim,
            script_prev,
            agents,
            crashed: BTreeMap::new(),
            queue: BTreeMap::new(),
            seq: 0,
            channels: BTreeMap::new(),
            messages: Vec::new(),
            created: Vec::new(),
            intent_rids: vec![None; scenario.intents.len()],
            waiting: BTreeMap::new(),
            outbox: BTreeMap::new(),
            trace: Vec::new(),
            now: 0,
        };
        for id in scenario.agent_ids() {
            if let Some(t) = scenario.crash_tick(id) {
                e.schedule(t, Class::Crash, Event::Crash(id));
            }
        }
        for (i, intent) in scenario.intents.iter().enumerate() {
            e.schedule(intent.tick, Class::Intent, Event::Intent(i));
        }
        e
    }

    fn schedule(&mut self, tick: u64, class: Class, event: Event) {
        self.seq += 1;
        let order = match (class, self.sim.policy.delivery) {
            (Class::Arrive, DeliveryOrder::Lifo) => u64::MAX - self.seq,
            _ => self.seq,
        };
        self.queue.insert((tick, class, order, self.seq), event);
    }

    fn log(&mut self, agent: AgentId, action: TraceAction, rid: Option<Rid>) {
        self.trace.push(TraceRecord { tick: self.now, agent, action, rid });
    }

    fn agent(&mut self, id: AgentId) -> &mut AgentState {
        &mut self.agents[id.index()]
    }

    fn alive(&self, id: AgentId) -> bool {
        !self.crashed.contains_key(&id)
    }

    fn channel(&mut self, from: AgentId, to: AgentId) -> &mut ChaCha8Rng {
        let seed = self.sim.config.seed;
        self.channels.entry((from, to)).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((from.get() as u64) << 32) | to.get() as u64);
            rng
        })
    }

    fn execute(mut self) -> ExecutionRecord {
        let budget = self.sim.config.event_budget;
        let mut processed = 0u64;
        let outcome = loop {
            let Some(((tick, _, _, _), event)) = self.queue.pop_first() else {
                break Outcome::Quiescent { events: processed, final_tick: self.now };
            };
            if processed >= budget {
                break Outcome::NonQuiescent { events: processed };
            }
            processed += 1;
            self.now = tick;
            match event {
                Event::Crash(a) => self.crash(a),
                Event::Arrive(m) => self.arrive(m),
                Event::Fairness(m) => self.fairness(m),
                Event::Send(a, batch) => self.send_batch(a, &batch),
                Event::Intent(i) => self.intent(i),
                Event::Flush(a) => self.flush(a),
            }
        };
        let stalled = self.waiting.values().flatten().copied().collect();
        ExecutionRecord::new(
            self.sim.scenario,
            self.sim.config.seed,
            self.sim.policy,
            self.trace,
            self.agents,
            self.crashed,
            self.created,
            self.intent_rids,
            outcome,
            stalled,
        )
    }

    fn crash(&mut self, a: AgentId) {
        if self.alive(a) {
            self.crashed.insert(a, self.now);
            self.waiting.remove(&a);
            self.outbox.remove(&a);
            self.log(a, TraceAction::Crash, None);
        }
    }

    fn intent(&mut self, i: usize) {
        let scenario = self.sim.scenario;
        let intent = &scenario.intents[i];
        let a = intent.agent;
        if self.intent_rids[i].is_some() {
            return;
        }
        if !self.alive(a) {
            self.log(a, TraceAction::Skip(i), None);
            return;
        }
        // An agent runs its script in order, so a waiting intent holds back
        // the agent's later ones and sequence numbers do not depend on timing.
        let ready = self.script_prev[i].is_none_or(|p| self.intent_rids[p].is_some());
        let parents = match &intent.parents {
            _ if !ready => None,
            ParentRule::Empty => Some(ParentSelection::Empty),
            ParentRule::Frontier => Some(ParentSelection::Frontier),
            ParentRule::Explicit(refs) => self.resolve(i, refs).map(ParentSelection::Explicit),
        };
        let Some(parents) = parents else {
            if self.waiting.entry(a).or_default().insert(i) {
                self.log(a, TraceAction::Defer(i), None);
            }
            return;
        };
        if let Some(w) = self.waiting.get_mut(&a) {
            w.remove(&i);
        }
        let forged = self.sim.injector.and_then(|inj| {
            let set = match &parents {
                ParentSelection::Explicit(s) => s.clone(),
                ParentSelection::Frontier => self.agents[a.index()].local_frontier(&intent.key).expect("subscribed"),
                ParentSelection::Empty => BTreeSet::new(),
            };
            inj.forge(&self.agents[a.index()], intent, i, &set)
        });
        let c = match forged {
            Some(c) => {
                let receipt = self.agent(a).emit_forged(c.clone()).expect("validated scenario");
                self.note_receipt(a, &receipt, c.rid());
                c
            }
            None => self
                .agent(a)
                .contribute(&intent.key, intent.payload.clone(), parents)
                .expect("validated scenario with observed parents"),
        };
        self.log(a, TraceAction::Contribute(i), Some(c.rid()));
        self.intent_rids[i] = Some(c.rid());
        self.created.push(c);
        let idx = self.created.len() - 1;
        let out = self.outbox.entry(a).or_default();
        out.push(idx);
        if out.len() == 1 {
            self.schedule(self.now, Class::Flush, Event::Flush(a));
        }
        self.wake(a);
    }

    // Rids for explicit references, once every one of them is observed.
    fn resolve(&self, i: usize, refs: &[usize]) -> Option<BTreeSet<Rid>> {
        let agent = &self.agents[self.sim.scenario.intents[i].agent.index()];
        let forward = self.sim.injector.is_some_and(|inj| inj.forward_refs());
        let mut out = BTreeSet::new();
        for &j in refs {
            let predicted = || self.sim.injector.and_then(|inj| inj.predict_rid(self.sim.scenario, j));
            match self.intent_rids[j] {
                Some(r) if forward || agent.observed().contains(&r) => {
                    out.insert(r);
                }
                Some(_) => return None,
                None => {
                    let r = predicted()?;
                    out.insert(r);
                },
            }
        }
        Some(out)
    }

    fn wake(&mut self, a: AgentId) {
        let pending: Vec<usize> = self.waiting.get(&a).map(|w| w.iter().copied().collect()).unwrap_or_default();
        for i in pending {
            self.schedule(self.now, Class::Intent, Event::Intent(i));
        }
    }

    fn flush(&mut self, a: AgentId) {
        let Some(indices) = self.outbox.remove(&a) else { return };
        let outbox: Vec<Contribution> = indices.iter().map(|&i| self.created[i].clone()).collect();
        let salt = ((a.get() as u64) << 40) ^ self.now;
        let batches = apply_policy(&self.sim.policy, outbox, salt).expect("shipped policies partition their input");
        let by_rid: BTreeMap<Rid, usize> = indices.iter().map(|&i| (self.created[i].rid(), i)).collect();
        for (n, batch) in batches.iter().enumerate() {
            let batch: Vec<usize> = batch.iter().map(|c| by_rid[&c.rid()]).collect();
            if n == 0 {
                self.send_batch(a, &batch);
            } else {
                self.schedule(self.now + n as u64, Class::Send, Event::Send(a, batch));
            }
        }
    }

    fn send_batch(&mut self, from: AgentId, batch: &[usize]) {
        for &ci in batch {
            let key = self.created[ci].key().to_string();
            for to in self.sim.scenario.relevant(&key) {
                if to == from {
                    continue;
                }
                self.messages.push(Message { contribution: ci, from, to, delivered: false });
                let m = self.messages.len() - 1;
                self.transmit(m);
                if self.sim.config.fairness {
                    let at = self.now + self.sim.config.fairness_bound;
                    self.schedule(at, Class::Fairness, Event::Fairness(m));
                }
            }
        }
    }

    fn transmit(&mut self, m: usize) {
        let (from, to) = (self.messages[m].from, self.messages[m].to);
        if self.sim.config.blocked(from, to) {
            let rid = self.created[self.messages[m].contribution].rid();
            self.log(to, TraceAction::Blocked(from), Some(rid));
            return;
        }
        let max = self.sim.config.max_reorder_delay;
        let delay = self.channel(from, to).gen_range(0..=max);
        self.schedule(self.now + 1 + delay, Class::Arrive, Event::Arrive(m));
    }

    fn arrive(&mut self, m: usize) {
        let Message { contribution, from, to, .. } = self.messages[m];
        let rid = self.created[contribution].rid();
        let (dup, drop) = (self.sim.config.duplicate, self.sim.config.drop);
        let rng = self.channel(from, to);
        let copy = rng.gen_bool(dup);
        let lost = rng.gen_bool(drop);
        if copy {
            self.transmit(m);
        }
        if lost {
            self.log(to, TraceAction::Drop(from), Some(rid));
        } else {
            self.deliver(m, TraceAction::Deliver(from));
        }
    }

    fn fairness(&mut self, m: usize) {
        if !self.messages[m].delivered {
            let from = self.messages[m].from;
            self.deliver(m, TraceAction::Forced(from));
        }
    }

    fn deliver(&mut self, m: usize, action: TraceAction) {
        let Message { contribution, to, .. } = self.messages[m];
        let rid = self.created[contribution].rid();
        if !self.alive(to) {
            self.log(to, TraceAction::Lost, Some(rid));
            return;
        }
        self.messages[m].delivered = true;
        self.log(to, action, Some(rid));
        let c = self.created[contribution].clone();
        let receipt = self.agent(to).receive(&c).expect("recipients subscribe to the key");
        self.note_receipt(to, &receipt, rid);
        self.wake(to);
    }

    fn note_receipt(&mut self, a: AgentId, receipt: &Receipt, rid: Rid) {
        let action = match receipt {
            Receipt::Merged => return,
            Receipt::Buffered => TraceAction::Buffer,
            Receipt::Duplicate => TraceAction::Duplicate,
            Receipt::Collision(_) => TraceAction::Collision,
            Receipt::Cycle(_, other) => TraceAction::Cycle(*other),
            Receipt::Tampered(_) => TraceAction::Tampered,
        };
        self.log(a, action, Some(rid));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semilattice::Value;

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::default().validate().is_ok());
        let c = NetworkConfig { drop: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = NetworkConfig { max_reorder_delay: 10, fairness_bound: 10, ..Default::default() };
        assert!(c.validate().is_err());
        let c = NetworkConfig { max_reorder_delay: 10, fairness_bound: 10, fairness: false, ..Default::default() };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn concurrent_converges_for_any_seed() {
        let s = Scenario::concurrent();
        for seed in 0..20 {
            let cfg = NetworkConfig { drop: 0.5, duplicate: 0.3, max_reorder_delay: 3, ..Default::default() }.with_seed(seed);
            let rec = run(&s, &cfg).unwrap();
            assert!(matches!(rec.outcome, Outcome::Quiescent { .. }));
            for a in &rec.agents {
                assert_eq!(a.value("k").unwrap(), Value::gset(["x", "y"]));
            }
        }
    }

    #[test]
    fn causal_waits_for_parent() {
        let rec = run(&Scenario::causal(), &NetworkConfig::default()).unwrap();
        let dag = rec.global_dag().unwrap();
        assert_eq!(dag.edge_count(), 1);
        let y = rec.intent_rids[0].unwrap();
        let x = rec.intent_rids[1].unwrap();
        assert!(dag.is_ancestor(&y, &x).unwrap());
        assert!(rec.trace.iter().any(|t| t.action == TraceAction::Defer(1)));
    }

    #[test]
    fn forced_delivery_under_heavy_loss() {
        let s = Scenario::concurrent();
        let cfg = NetworkConfig { drop: 0.9, fairness_bound: 4, ..Default::default() };
        for seed in 0..10 {
            let rec = run(&s, &cfg.clone().with_seed(seed)).unwrap();
            for a in &rec.agents {
                assert_eq!(a.observed().len(), 2);
            }
            let last = rec.trace.iter().filter(|t| matches!(t.action, TraceAction::Forced(_) | TraceAction::Deliver(_)));
            assert!(last.map(|t| t.tick).max().unwrap() <= 4);
        }
    }

    #[test]
    fn partition_without_fairness_starves() {
        let s = Scenario::concurrent();
        let one = AgentId::new(1).unwrap();
        let two = AgentId::new(2).unwrap();
        let cfg = NetworkConfig { fairness: false, partition: vec![(one, two)], ..Default::default() };
        let rec = run(&s, &cfg).unwrap();
        assert_eq!(rec.agents[0].value("k").unwrap(), Value::gset(["x"]));
        assert_eq!(rec.agents[1].value("k").unwrap(), Value::gset(["y"]));
    }

    #[test]
    fn replay_is_identical() {
        let s = Scenario::random(4, 5, 20);
        let cfg = s.network.clone().with_seed(77);
        assert_eq!(run(&s, &cfg).unwrap().trace, run(&s, &cfg).unwrap().trace);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let s = Scenario::random(4, 5, 20);
        let cfg = NetworkConfig { event_budget: 10, ..s.network.clone() };
        let rec = run(&s, &cfg).unwrap();
        assert_eq!(rec.outcome, Outcome::NonQuiescent { events: 10 });
    }

    #[test]
    fn crashed_agent_stops() {
        let s = Scenario::concurrent().with_idle_crash(0);
        let rec = run(&s, &NetworkConfig::default()).unwrap();
        let three = AgentId::new(3).unwrap();
        assert_eq!(rec.crashed.get(&three), Some(&0));
        assert!(rec.agents[2].observed().is_empty());
    }
}
