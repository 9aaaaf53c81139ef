//! Declarative scenarios: agents, keys with their subscribers, scripted
//! intents, crash ticks, network configuration and operational policy.
//!
//! ```toml
//! name = "concurrent"
//! agents = 2
//!
//! [keys.k]
//! space = "gset"
//! subscribers = []        # empty means every agent
//!
//! [[intents]]
//! tick = 0
//! agent = 1
//! key = "k"
//! payload = { gset = ["x"] }
//! parents = "empty"       # or "frontier", or { explicit = [0] }
//!
//! [[crashes]]
//! tick = 3
//! agent = 2
//!
//! [network]
//! drop = 0.3
//! fairness = true
//! fairness_bound = 20
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contribution::AgentId;
use crate::network::{NetworkConfig, NetworkError};
use crate::policy::OperationalPolicy;
use crate::semilattice::{SpaceTag, StateSpaceRegistry, Value};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario not found: {0}")]
    NotFound(String),
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeySpec {
    pub space: SpaceTag,
    #[serde(default)]
    pub subscribers: Vec<AgentId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParentRule {
    #[default]
    Empty,
    Frontier,
    /// Indices of other intents, whose contributions become the parents.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intent {
    pub tick: u64,
    pub agent: AgentId,
    pub key: String,
    pub payload: Value,
    #[serde(default)]
    pub parents: ParentRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSpec {
    pub tick: u64,
    pub agent: AgentId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub agents: u32,
    #[serde(default)]
    pub keys: BTreeMap<String, KeySpec>,
    #[serde(default)]
    pub intents: Vec<Intent>,
    #[serde(default)]
    pub crashes: Vec<CrashSpec>,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub policy: OperationalPolicy,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                ScenarioError::NotFound(path.display().to_string())
            } else {
                ScenarioError::Io { path: path.display().to_string(), source }
            }
        })?;
        Self::from_toml(&text)
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> {
        (1..=self.agents).map(|i| AgentId::new(i).expect("ids start at 1"))
    }

    /// `Rel(k)`: the declared subscribers, or every agent when none are listed.
    pub fn relevant(&self, key: &str) -> BTreeSet<AgentId> {
        match self.keys.get(key) {
            Some(spec) if spec.subscribers.is_empty() => self.agent_ids().collect(),
            Some(spec) => spec.subscribers.iter().copied().collect(),
            None => BTreeSet::new(),
        }
    }

    /// Keys and spaces an agent subscribes to.
    pub fn subscriptions(&self, agent: AgentId) -> BTreeMap<String, SpaceTag> {
        self.keys
            .iter()
            .filter(|(k, _)| self.relevant(k).contains(&agent))
            .map(|(k, spec)| (k.clone(), spec.space))
            .collect()
    }

    pub fn crash_tick(&self, agent: AgentId) -> Option<u64> {
        self.crashes.iter().filter(|c| c.agent == agent).map(|c| c.tick).min()
    }

    /// Checks references, spaces and subscriptions. Lawful scenarios may
    /// only reference earlier intents of the same key; `forward_refs`
    /// lifts that for forgery runs.
    pub fn validate(&self, registry: &StateSpaceRegistry, forward_refs: bool) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.agents == 0 {
            return invalid("at least one agent is required".into());
        }
        self.network.validate()?;
        for (key, spec) in &self.keys {
            if !registry.contains(spec.space) {
                return invalid(format!("key `{key}` uses unregistered space `{}`", spec.space));
            }
            if let Some(a) = spec.subscribers.iter().find(|a| a.get() > self.agents) {
                return invalid(format!("key `{key}` lists unknown subscriber {a}"));
            }
        }
        for c in &self.crashes {
            if c.agent.get() > self.agents {
                return invalid(format!("crash of unknown agent {}", c.agent));
            }
        }
        for (i, intent) in self.intents.iter().enumerate() {
            let Some(spec) = self.keys.get(&intent.key) else {
                return invalid(format!("intent {i}: unknown key `{}`", intent.key));
            };
            if intent.agent.get() > self.agents {
                return invalid(format!("intent {i}: unknown agent {}", intent.agent));
            }
            if !self.relevant(&intent.key).contains(&intent.agent) {
                return invalid(format!("intent {i}: agent {} does not subscribe to `{}`", intent.agent, intent.key));
            }
            if intent.payload.space() != spec.space {
                return invalid(format!(
                    "intent {i}: payload is {} but key `{}` is {}",
                    intent.payload.space(),
                    intent.key,
                    spec.space
                ));
            }
            if let Value::GsetMap(m) = &intent.payload {
                if m.values().any(BTreeSet::is_empty) {
                    return invalid(format!("intent {i}: gset_map entries must be non-empty"));
                }
            }
            if let ParentRule::Explicit(refs) = &intent.parents {
                for &j in refs {
                    if j >= self.intents.len() || j == i {
                        return invalid(format!("intent {i}: bad parent reference {j}"));
                    }
                    if !forward_refs && j > i {
                        return invalid(format!("intent {i}: parent reference {j} is not an earlier intent"));
                    }
                    if !forward_refs && self.intents[j].key != intent.key {
                        return invalid(format!("intent {i}: parent intent {j} has a different key"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Two agents each add one element with no causal link.
    pub fn concurrent() -> Self {
        Self::pair("concurrent", ParentRule::Empty)
    }

    /// Same two elements, but `x` is created after observing `y`.
    pub fn causal() -> Self {
        Self::pair("causal", ParentRule::Explicit(vec![0]))
    }

    fn pair(name: &str, rule: ParentRule) -> Self {
        let a = |i| AgentId::new(i).unwrap();
        Scenario {
            name: name.into(),
            agents: 2,
            keys: BTreeMap::from([("k".into(), KeySpec { space: SpaceTag::Gset, subscribers: vec![] })]),
            intents: vec![
                Intent { tick: 0, agent: a(2), key: "k".into(), payload: Value::gset(["y"]), parents: ParentRule::Empty },
                Intent { tick: 0, agent: a(1), key: "k".into(), payload: Value::gset(["x"]), parents: rule },
            ],
            crashes: vec![],
            network: NetworkConfig::default(),
            policy: OperationalPolicy::default(),
        }
    }

    /// A random lawful scenario over three keys (one per lawful space).
    ///
    /// Parents are empty or explicit references to earlier intents of the
    /// same key, so the contribution set does not depend on the network
    /// seed.
    pub fn random(seed: u64, agents: u32, intents: usize) -> Self {
        assert!(agents >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<AgentId> = (1..=agents).map(|i| AgentId::new(i).unwrap()).collect();
        let mut keys = BTreeMap::new();
        for (name, space) in [("set", SpaceTag::Gset), ("max", SpaceTag::Maxint), ("tags", SpaceTag::GsetMap)] {
            let size = rng.gen_range(2..=all.len());
            let mut subs: Vec<AgentId> = all.choose_multiple(&mut rng, size).copied().collect();
            subs.sort();
            keys.insert(name.to_string(), KeySpec { space, subscribers: subs });
        }
        let names: Vec<String> = keys.keys().cloned().collect();
        // ticks follow index order, so waiting on an earlier intent never
        // waits on a later one
        let mut ticks: Vec<u64> = (0..intents).map(|_| rng.gen_range(0..30)).collect();
        ticks.sort();
        let mut list: Vec<Intent> = Vec::with_capacity(intents);
        for i in 0..intents {
            let key = names.choose(&mut rng).unwrap().clone();
            let spec = &keys[&key];
            let agent = *spec.subscribers.choose(&mut rng).unwrap();
            let payload = match spec.space {
                SpaceTag::Gset => Value::gset([format!("e{}", rng.gen_range(0..8))]),
                SpaceTag::Maxint => Value::Maxint(rng.gen_range(0..100)),
                _ => Value::gset_map([(format!("t{}", rng.gen_range(0..3)), BTreeSet::from([format!("v{i}")]))]),
            };
            let earlier: Vec<usize> = (0..i).filter(|j| list[*j].key == key).collect();
            let parents = if !earlier.is_empty() && rng.gen_bool(0.6) {
                let n = rng.gen_range(1..=earlier.len().min(2));
                let mut refs: Vec<usize> = earlier.iter().copied().choose_multiple(&mut rng, n);
                refs.sort();
                ParentRule::Explicit(refs)
            } else {
                ParentRule::Empty
            };
            list.push(Intent { tick: ticks[i], agent, key, payload, parents });
        }
        Scenario {
            name: format!("random-{seed}"),
            agents,
            keys,
            intents: list,
            crashes: vec![],
            network: NetworkConfig {
                drop: 0.3,
                duplicate: 0.2,
                max_reorder_delay: 5,
                fairness: true,
                fairness_bound: 20,
                ..NetworkConfig::default()
            },
            policy: OperationalPolicy::default(),
        }
    }

    /// Adds an agent that subscribes to every key, never creates anything,
    /// and crashes at `tick`.
    pub fn with_idle_crash(mut self, tick: u64) -> Self {
        self.agents += 1;
        let extra = AgentId::new(self.agents).unwrap();
        for spec in self.keys.values_mut() {
            if !spec.subscribers.is_empty() {
                spec.subscribers.push(extra);
            }
        }
        self.crashes.push(CrashSpec { tick, agent: extra });
        self.name = format!("{}+crash", self.name);
        self
    }
}
