//! Executable laws. Each [`LawCase`] names a law, draws random inputs with
//! proptest, and reports either success or a shrunk counterexample.
//!
//! Cases that remove an axiom are expected to fail, and only count as
//! passing when the counterexample shows the failure they are named after.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{AgentState, Receipt};
use crate::contribution::{make_contribution, AgentId, Contribution, Rid};
use crate::dag::{isomorphic, observationally_equivalent, ProvenanceDag};
use crate::experiments::{prop_one_pair, run_problems, PairKind};
use crate::network::{run, NetworkConfig, Simulation};
use crate::policy::OperationalPolicy;
use crate::scenario::{Intent, KeySpec, ParentRule, Scenario};
use crate::semilattice::{join, join_all, leq, overwrite_merge, SpaceTag, Value};
use crate::violations::{run_violation, Classification, ViolationMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LawId {
    /// State only grows.
    L1,
    /// Arrival order and duplicates do not change the state.
    L2,
    /// The state is the join of the observed payloads.
    L3,
    /// Under fairness every contribution reaches every live relevant agent.
    L4,
    /// Observed contributions are never lost or changed.
    L5,
    Aci,
    Thm1,
    Thm2,
    P1,
    P2,
    T3i,
    T3ii,
    T3iii,
    T3iv,
    T3v,
}

impl LawId {
    pub const ALL: [LawId; 15] = [
        LawId::L1,
        LawId::L2,
        LawId::L3,
        LawId::L4,
        LawId::L5,
        LawId::Aci,
        LawId::Thm1,
        LawId::Thm2,
        LawId::P1,
        LawId::P2,
        LawId::T3i,
        LawId::T3ii,
        LawId::T3iii,
        LawId::T3iv,
        LawId::T3v,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LawId::L1 => "L1",
            LawId::L2 => "L2",
            LawId::L3 => "L3",
            LawId::L4 => "L4",
            LawId::L5 => "L5",
            LawId::Aci => "ACI",
            LawId::Thm1 => "THM1",
            LawId::Thm2 => "THM2",
            LawId::P1 => "P1",
            LawId::P2 => "P2",
            LawId::T3i => "T3-i",
            LawId::T3ii => "T3-ii",
            LawId::T3iii => "T3-iii",
            LawId::T3iv => "T3-iv",
            LawId::T3v => "T3-v",
        }
    }

    /// The violation mode behind a T3 case.
    pub fn violation(self) -> Option<ViolationMode> {
        match self {
            LawId::T3i => Some(ViolationMode::NoFairness),
            LawId::T3ii => Some(ViolationMode::NonSemilattice),
            LawId::T3iii => Some(ViolationMode::DuplicateRid),
            LawId::T3iv => Some(ViolationMode::MutableParents),
            LawId::T3v => Some(ViolationMode::CausalForgery),
            _ => None,
        }
    }
}

impl fmt::Display for LawId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a case should produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expect {
    Pass,
    /// Fail, with this marker in the counterexample.
    Fail(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawCase {
    pub id: LawId,
    /// State space for ACI cases.
    pub space: Option<SpaceTag>,
    pub trials: u32,
    pub expect: Expect,
}

impl LawCase {
    pub fn new(id: LawId, trials: u32) -> Self {
        let expect = match id.violation() {
            Some(m) => Expect::Fail(m.expected().to_string()),
            None => Expect::Pass,
        };
        LawCase { id, space: None, trials, expect }
    }

    pub fn aci(space: SpaceTag, trials: u32) -> Self {
        let expect = if space.is_lawful() { Expect::Pass } else { Expect::Fail("not commutative".into()) };
        LawCase { id: LawId::Aci, space: Some(space), trials, expect }
    }

    pub fn name(&self) -> String {
        match self.space {
            Some(s) => format!("{}[{}]", self.id, s.as_str()),
            None => self.id.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawOutcome {
    pub case: LawCase,
    /// Whether the law held on every trial.
    pub held: bool,
    /// Shrunk failing input and the reason, when it did not.
    pub counterexample: Option<String>,
}

impl LawOutcome {
    /// Whether the outcome is the expected one.
    pub fn ok(&self) -> bool {
        match &self.case.expect {
            Expect::Pass => self.held,
            Expect::Fail(marker) => !self.held && self.counterexample.as_ref().is_some_and(|c| c.contains(marker.as_str())),
        }
    }

    /// One line suitable for a fixture file.
    pub fn fixture(&self) -> String {
        format!(
            "{}\ttrials={}\t{}\t{}",
            self.case.name(),
            self.case.trials,
            if self.held { "held" } else { "failed" },
            self.counterexample.as_deref().unwrap_or("-").replace('\n', " ")
        )
    }
}

impl fmt::Display for LawOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match (&self.case.expect, self.ok()) {
            (Expect::Pass, true) => "pass",
            (Expect::Fail(_), true) => "expected failure",
            (_, false) => "UNEXPECTED",
        };
        write!(f, "{:<14} {:>5} trials  {verdict}", self.case.name(), self.case.trials)?;
        if let Some(c) = &self.counterexample {
            write!(f, "  [{}]", c.replace('\n', " "))?;
        }
        Ok(())
    }
}

/// The full suite with its default trial counts.
pub fn default_suite() -> Vec<LawCase> {
    let mut cases: Vec<LawCase> = [LawId::L1, LawId::L2, LawId::L3, LawId::L4, LawId::L5]
        .into_iter()
        .map(|id| LawCase::new(id, 500))
        .collect();
    cases.extend(SpaceTag::LAWFUL.map(|s| LawCase::aci(s, 1000)));
    cases.push(LawCase::aci(SpaceTag::OverwriteRegister, 200));
    cases.push(LawCase::new(LawId::Thm1, 100));
    cases.push(LawCase::new(LawId::Thm2, 100));
    cases.push(LawCase::new(LawId::P1, 200));
    cases.push(LawCase::new(LawId::P2, 100));
    for id in [LawId::T3i, LawId::T3ii, LawId::T3iii, LawId::T3iv, LawId::T3v] {
        cases.push(LawCase::new(id, 50));
    }
    cases
}

/// Law ids with no case in `cases`. The suite is total when this is empty.
pub fn coverage_gaps(cases: &[LawCase]) -> Vec<LawId> {
    let covered: BTreeSet<LawId> = cases.iter().map(|c| c.id).collect();
    LawId::ALL.into_iter().filter(|id| !covered.contains(id)).collect()
}

fn runner(trials: u32, seed: u64) -> TestRunner {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    let config = Config { cases: trials, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &bytes))
}

fn check<S: Strategy>(
    case: &LawCase,
    seed: u64,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> LawOutcome
where
    S::Value: fmt::Debug,
{
    let result = runner(case.trials, seed).run(&strategy, test);
    let (held, counterexample) = match result {
        Ok(()) => (true, None),
        Err(TestError::Fail(reason, value)) => (false, Some(format!("{reason}; input {value:?}"))),
        Err(TestError::Abort(reason)) => (false, Some(format!("aborted: {reason}"))),
    };
    LawOutcome { case: case.clone(), held, counterexample }
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

pub fn run_law(case: &LawCase, seed: u64) -> LawOutcome {
    match case.id {
        LawId::Aci => law_aci(case, seed),
        LawId::L1 | LawId::L5 => law_receive_sequence(case, seed),
        LawId::L2 => law_order(case, seed),
        LawId::L3 => law_decompose(case, seed),
        LawId::L4 => law_propagation(case, seed),
        LawId::Thm1 => law_theorem_one(case, seed),
        LawId::Thm2 => law_theorem_two(case, seed),
        LawId::P1 => law_prop_one(case, seed),
        LawId::P2 => law_prop_two(case, seed),
        LawId::T3i | LawId::T3ii | LawId::T3iii | LawId::T3iv | LawId::T3v => law_violation(case, seed),
    }
}

/// Values of one space, small enough to collide often.
pub fn value_strategy(space: SpaceTag) -> BoxedStrategy<Value> {
    let elem = prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]);
    match space {
        SpaceTag::Gset => prop::collection::btree_set(elem, 0..5).prop_map(Value::gset).boxed(),
        SpaceTag::Maxint => (0u64..50).prop_map(Value::Maxint).boxed(),
        SpaceTag::GsetMap => {
            let key = prop::sample::select(vec!["x", "y", "z"]);
            prop::collection::vec((key, prop::collection::btree_set(elem, 0..3)), 0..4)
                .prop_map(Value::gset_map)
                .boxed()
        }
        SpaceTag::OverwriteRegister => (0u64..50).prop_map(Value::Overwrite).boxed(),
    }
}

fn law_aci(case: &LawCase, seed: u64) -> LawOutcome {
    let space = case.space.expect("ACI case needs a space");
    let v = value_strategy(space);
    check(case, seed, (v.clone(), v.clone(), v), move |(a, b, c)| {
        if space == SpaceTag::OverwriteRegister {
            let (Value::Overwrite(x), Value::Overwrite(y)) = (&a, &b) else { unreachable!() };
            if overwrite_merge(*x, *y) != overwrite_merge(*y, *x) {
                return Err(fail(format!("not commutative: {x} then {y} vs {y} then {x}")));
            }
            return Ok(());
        }
        let j = |x: &Value, y: &Value| join(x, y).map_err(|e| fail(e.to_string()));
        if j(&j(&a, &b)?, &c)? != j(&a, &j(&b, &c)?)? {
            return Err(fail("not associative"));
        }
        if j(&a, &b)? != j(&b, &a)? {
            return Err(fail("not commutative"));
        }
        if j(&a, &a)? != a {
            return Err(fail("not idempotent"));
        }
        let ab = j(&a, &b)?;
        if !leq(&a, &ab).unwrap() || !leq(&b, &ab).unwrap() {
            return Err(fail("not inflationary"));
        }
        if j(&space.bottom(), &a)? != a {
            return Err(fail("bottom is not an identity"));
        }
        Ok(())
    })
}

/// A history over a gset key `s` and a maxint key `m`. Each step is
/// (creator index, key, element, parent mask over earlier same-key steps).
pub type HistorySpec = Vec<(u8, bool, u8, u32)>;

pub fn history_strategy(max_len: usize) -> impl Strategy<Value = HistorySpec> {
    prop::collection::vec((0u8..3, any::<bool>(), 0u8..8, any::<u32>()), 1..=max_len)
}

pub fn history_keys() -> BTreeMap<String, SpaceTag> {
    BTreeMap::from([("m".to_string(), SpaceTag::Maxint), ("s".to_string(), SpaceTag::Gset)])
}

pub fn build_history(spec: &HistorySpec) -> Vec<Contribution> {
    let mut seqs = [0u64; 3];
    let mut out: Vec<Contribution> = Vec::new();
    let mut observed = BTreeSet::new();
    for (i, &(creator, is_set, elem, mask)) in spec.iter().enumerate() {
        let key = if is_set { "s" } else { "m" };
        let earlier: Vec<Rid> = out.iter().filter(|c| c.key() == key).map(Contribution::rid).collect();
        let parents: BTreeSet<Rid> =
            earlier.iter().rev().take(32).enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, r)| *r).collect();
        let (payload, space) = if is_set {
            (Value::gset([format!("e{elem}")]), SpaceTag::Gset)
        } else {
            (Value::Maxint(u64::from(elem) * 3 + i as u64 % 3), SpaceTag::Maxint)
        };
        let c = make_contribution(AgentId::from_index(creator.into()), seqs[creator as usize], key, parents, payload, space, &observed)
            .expect("parents precede");
        seqs[creator as usize] += 1;
        observed.insert(c.rid());
        out.push(c);
    }
    out
}

/// A delivery order over `n` items: a permutation with some repeats.
fn delivery_strategy(spec: HistorySpec) -> impl Strategy<Value = (HistorySpec, Vec<usize>)> {
    let n = spec.len();
    let order = Just((0..n).collect::<Vec<usize>>()).prop_shuffle();
    let repeats = prop::collection::vec(0..n, 0..=n.min(10));
    (Just(spec), order, repeats).prop_map(|(s, mut order, repeats)| {
        order.extend(repeats);
        (s, order)
    })
}

fn observer() -> AgentState {
    AgentState::new(AgentId::from_index(9), history_keys())
}

fn receive(agent: &mut AgentState, c: &Contribution) -> Result<Receipt, TestCaseError> {
    agent.receive(c).map_err(|e| fail(e.to_string()))
}

// L1 and L5 share one input: a receive sequence, checked after every step.
fn law_receive_sequence(case: &LawCase, seed: u64) -> LawOutcome {
    let id = case.id;
    check(case, seed, history_strategy(30).prop_flat_map(delivery_strategy), move |(spec, order)| {
        let history = build_history(&spec);
        let mut agent = observer();
        for &i in &order {
            let before_values = agent.values();
            let before_dag: BTreeMap<Rid, Contribution> = agent.dag().known().map(|c| (c.rid(), c.clone())).collect();
            let before_observed = agent.observed().clone();
            receive(&mut agent, &history[i])?;
            match id {
                LawId::L1 => {
                    for (k, v) in &before_values {
                        let now = agent.value(k).map_err(|e| fail(e.to_string()))?;
                        if !leq(v, &now).unwrap() {
                            return Err(fail(format!("key {k} went from {v} to {now}")));
                        }
                    }
                }
                _ => {
                    if !before_observed.is_subset(agent.observed()) {
                        return Err(fail("an observed rid disappeared"));
                    }
                    for (rid, c) in &before_dag {
                        match agent.dag().get(rid) {
                            Some(now) if now.same_content(c) => {}
                            _ => return Err(fail(format!("record {} lost or changed", rid.short()))),
                        }
                    }
                    for r in agent.observed() {
                        let c = agent.dag().get(r).ok_or_else(|| fail("observed but not stored"))?;
                        if !leq(c.payload(), &agent.value(c.key()).unwrap()).unwrap() {
                            return Err(fail(format!("payload of {} not in the state", r.short())));
                        }
                    }
                }
            }
        }
        Ok(())
    })
}

/// All permutations of `items`, by Heap's algorithm.
pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    fn heap<T: Clone>(k: usize, a: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut a = items.to_vec();
    let mut out = Vec::new();
    heap(a.len(), &mut a, &mut out);
    out
}

// Exhaustive over every permutation of up to five payloads (with one
// duplicated), plus an agent fed the same history in two random orders.
fn law_order(case: &LawCase, seed: u64) -> LawOutcome {
    let space = prop::sample::select(SpaceTag::LAWFUL.to_vec());
    let payloads = space.prop_flat_map(|s| (Just(s), prop::collection::vec(value_strategy(s), 1..=5)));
    let deliveries = history_strategy(12).prop_flat_map(delivery_strategy);
    check(case, seed, (payloads, deliveries), |((space, values), (spec, order))| {
        let reference = join_all(space, &values).unwrap();
        let mut with_dup = values.clone();
        with_dup.push(values[0].clone());
        for list in [&values, &with_dup] {
            for p in permutations(list) {
                if join_all(space, &p).unwrap() != reference {
                    return Err(fail(format!("order {p:?} joins to a different value")));
                }
            }
        }
        let history = build_history(&spec);
        let mut a = observer();
        let mut b = observer();
        for &i in &order {
            receive(&mut a, &history[i])?;
        }
        for c in history.iter().rev() {
            receive(&mut b, c)?;
            receive(&mut b, c)?;
        }
        if a.values() != b.values() {
            return Err(fail("arrival order changed the state"));
        }
        if a.dag().vertices() != b.dag().vertices() {
            return Err(fail("arrival order changed the history"));
        }
        Ok(())
    })
}

fn law_decompose(case: &LawCase, seed: u64) -> LawOutcome {
    check(case, seed, history_strategy(20).prop_flat_map(delivery_strategy), |(spec, order)| {
        let history = build_history(&spec);
        let mut agent = observer();
        let split = order.len() / 2;
        for &i in &order {
            receive(&mut agent, &history[i])?;
        }
        for (key, space) in history_keys() {
            let payloads: Vec<&Value> = history.iter().filter(|c| c.key() == key).map(Contribution::payload).collect();
            let whole = join_all(space, payloads.iter().copied()).unwrap();
            let held = agent.value(&key).unwrap();
            if held != whole {
                return Err(fail(format!("key {key}: state {held} but join of payloads {whole}")));
            }
            if agent.recomputed_value(&key).unwrap() != held {
                return Err(fail(format!("key {key}: stored state differs from recomputation")));
            }
            let part = |idx: &[usize]| {
                join_all(space, idx.iter().map(|&i| &history[i]).filter(|c| c.key() == key).map(Contribution::payload)).unwrap()
            };
            let halves = join(&part(&order[..split]), &part(&order[split..])).unwrap();
            if halves != whole {
                return Err(fail(format!("key {key}: join of halves {halves} differs from {whole}")));
            }
        }
        Ok(())
    })
}

fn network_strategy() -> impl Strategy<Value = NetworkConfig> {
    (0.0f64..0.6, 0.0f64..0.4, 0u64..6, any::<u64>()).prop_map(|(drop, duplicate, delay, seed)| NetworkConfig {
        drop,
        duplicate,
        max_reorder_delay: delay,
        fairness_bound: delay + 5,
        seed,
        ..NetworkConfig::default()
    })
}

fn law_propagation(case: &LawCase, seed: u64) -> LawOutcome {
    let s = (any::<u64>(), 2u32..6, 1usize..12, network_strategy(), prop::option::of(0u64..20));
    check(case, seed, s, |(scenario_seed, agents, intents, cfg, crash)| {
        let mut scenario = Scenario::random(scenario_seed, agents, intents);
        if let Some(t) = crash {
            scenario = scenario.with_idle_crash(t);
        }
        let rec = run(&scenario, &cfg).map_err(|e| fail(e.to_string()))?;
        let counts = rec.delivery_counts();
        for c in &rec.created {
            for a in rec.live_relevant(c.key()) {
                if a != c.creator() && !counts.contains_key(&(a, c.rid())) {
                    return Err(fail(format!("{} never delivered to agent {a}", c.rid().short())));
                }
            }
        }
        Ok(())
    })
}

fn law_theorem_one(case: &LawCase, seed: u64) -> LawOutcome {
    let s = (any::<u64>(), 2u32..6, 1usize..20, any::<u64>(), any::<u64>());
    check(case, seed, s, |(scenario_seed, agents, intents, s1, s2)| {
        let scenario = Scenario::random(scenario_seed, agents, intents);
        let a = run(&scenario, &scenario.network.clone().with_seed(s1)).map_err(|e| fail(e.to_string()))?;
        let b = run(&scenario, &scenario.network.clone().with_seed(s2)).map_err(|e| fail(e.to_string()))?;
        for rec in [&a, &b] {
            if let Some(p) = run_problems(rec).first() {
                return Err(fail(p.clone()));
            }
        }
        let (ga, gb) = (a.global_dag().unwrap(), b.global_dag().unwrap());
        if isomorphic(&ga, &gb).is_none() {
            return Err(fail("global histories not isomorphic"));
        }
        Ok(())
    })
}

fn policy_strategy() -> impl Strategy<Value = OperationalPolicy> {
    prop_oneof![
        Just(OperationalPolicy::fifo()),
        (1usize..5).prop_map(OperationalPolicy::batching),
        any::<u64>().prop_map(OperationalPolicy::reordering),
    ]
}

fn law_theorem_two(case: &LawCase, seed: u64) -> LawOutcome {
    let s = (any::<u64>(), 2u32..6, 1usize..20, policy_strategy(), policy_strategy(), any::<u64>());
    check(case, seed, s, |(scenario_seed, agents, intents, p1, p2, net_seed)| {
        let scenario = Scenario::random(scenario_seed, agents, intents);
        let cfg = scenario.network.clone().with_seed(net_seed);
        let a = Simulation::new(&scenario, &cfg).policy(p1).run().map_err(|e| fail(e.to_string()))?;
        let b = Simulation::new(&scenario, &cfg).policy(p2).run().map_err(|e| fail(e.to_string()))?;
        let rids = |r: &crate::record::ExecutionRecord| r.created.iter().map(Contribution::rid).collect::<BTreeSet<_>>();
        if rids(&a) != rids(&b) {
            return Err(fail("contribution sets differ on a scripted scenario"));
        }
        if isomorphic(&a.global_dag().unwrap(), &b.global_dag().unwrap()).is_none() {
            return Err(fail(format!("{p1} and {p2} built non-isomorphic histories")));
        }
        Ok(())
    })
}

fn law_prop_one(case: &LawCase, seed: u64) -> LawOutcome {
    check(case, seed, (any::<u64>(), any::<bool>(), 2usize..=8), |(s, shuffled, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let kind = if shuffled { PairKind::Shuffled } else { PairKind::Reparented };
        let (a, b) = prop_one_pair(kind, n, &mut rng);
        let iso = isomorphic(&a, &b).is_some();
        let obs = observationally_equivalent(&a, &b).map_err(|e| fail(e.to_string()))?;
        if iso != obs.equivalent() {
            return Err(fail(format!("isomorphic={iso} but equivalent={}", obs.equivalent())));
        }
        Ok(())
    })
}

// n elements added concurrently versus as a causal chain.
fn law_prop_two(case: &LawCase, seed: u64) -> LawOutcome {
    check(case, seed, (2u32..6, any::<u64>()), |(n, net_seed)| {
        let build = |chain: bool| Scenario {
            name: if chain { "chain" } else { "concurrent" }.into(),
            agents: n,
            keys: BTreeMap::from([("k".into(), KeySpec { space: SpaceTag::Gset, subscribers: vec![] })]),
            intents: (0..n as usize)
                .map(|i| Intent {
                    tick: i as u64 * 50,
                    agent: AgentId::from_index(i),
                    key: "k".into(),
                    payload: Value::gset([format!("x{i}")]),
                    parents: if chain && i > 0 { ParentRule::Explicit(vec![i - 1]) } else { ParentRule::Empty },
                })
                .collect(),
            crashes: vec![],
            network: NetworkConfig { seed: net_seed, ..NetworkConfig::default() },
            policy: OperationalPolicy::default(),
        };
        let (sa, sb) = (build(false), build(true));
        let a = run(&sa, &sa.network).map_err(|e| fail(e.to_string()))?;
        let b = run(&sb, &sb.network).map_err(|e| fail(e.to_string()))?;
        let target = Value::gset((0..n).map(|i| format!("x{i}")));
        for rec in [&a, &b] {
            for agent in &rec.agents {
                if agent.value("k").ok() != Some(target.clone()) {
                    return Err(fail(format!("{} agent {} did not reach {target}", rec.scenario.name, agent.id())));
                }
            }
        }
        let (ga, gb): (ProvenanceDag, ProvenanceDag) = (a.global_dag().unwrap(), b.global_dag().unwrap());
        if isomorphic(&ga, &gb).is_some() {
            return Err(fail("concurrent and chained histories are isomorphic"));
        }
        let obs = observationally_equivalent(&ga, &gb).map_err(|e| fail(e.to_string()))?;
        if obs.witness.is_none() {
            return Err(fail("no distinguishing query"));
        }
        Ok(())
    })
}

// The guarantee asserted is "the pair is Consistent"; removing the axiom
// must break it with the mode's own classification.
fn law_violation(case: &LawCase, seed: u64) -> LawOutcome {
    let mode = case.id.violation().expect("T3 case");
    let scenario = mode.canonical_scenario();
    check(case, seed, (any::<u64>(), any::<u64>()), move |(s1, s2)| {
        let v = run_violation(mode, &scenario, (s1, s2)).map_err(|e| fail(e.to_string()))?;
        if v.classification != Classification::Consistent {
            return Err(fail(format!("{}: {}", v.classification, v.detail)));
        }
        Ok(())
    })
}
