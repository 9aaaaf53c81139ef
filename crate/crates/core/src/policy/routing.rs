//! Routing policies over a fixed topology: static shortest path, Q-routing,
//! and Q-routing whose learning rate follows recent delivery-time spread.
//!
//! Q-values estimate remaining hops. After forwarding from `x` to neighbor
//! `y` toward `d`, the entry is moved toward `1 + min_z Q_y(d, z)` (zero
//! remaining when `y = d`).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contribution::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("no route from {from} to {to}")]
    Unreachable { from: AgentId, to: AgentId },
    #[error("{neighbor} is not adjacent to {node}")]
    NotNeighbor { node: AgentId, neighbor: AgentId },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingMode {
    Static,
    Qlearning,
    Adaptive,
}

impl RoutingMode {
    pub const ALL: [RoutingMode; 3] = [RoutingMode::Static, RoutingMode::Qlearning, RoutingMode::Adaptive];

    pub fn as_str(self) -> &'static str {
        match self {
            RoutingMode::Static => "static",
            RoutingMode::Qlearning => "qlearning",
            RoutingMode::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Undirected, connected, unit-cost graph over agents `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTopology {
    adj: Vec<BTreeSet<usize>>,
    dist: Vec<Vec<usize>>,
}

impl RoutingTopology {
    pub fn new(n: usize, edges: &[(AgentId, AgentId)]) -> Result<Self, RoutingError> {
        let mut adj = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a == b {
                return Err(RoutingError::InvalidTopology(format!("self-loop at {a}")));
            }
            if a.index() >= n || b.index() >= n {
                return Err(RoutingError::InvalidTopology(format!("edge {a}-{b} outside 1..={n}")));
            }
            adj[a.index()].insert(b.index());
            adj[b.index()].insert(a.index());
        }
        let dist: Vec<Vec<usize>> = (0..n).map(|s| bfs(&adj, s)).collect();
        if n == 0 || dist[0].contains(&usize::MAX) {
            return Err(RoutingError::InvalidTopology("not connected".into()));
        }
        Ok(RoutingTopology { adj, dist })
    }

    /// Random spanning tree plus random extra edges, `edge_count` in total.
    pub fn random_connected(n: usize, edge_count: usize, seed: u64) -> Self {
        assert!(n >= 2 && edge_count >= n - 1 && edge_count <= n * (n - 1) / 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for i in 1..n {
            let j = rng.gen_range(0..i);
            edges.insert((j, i));
        }
        while edges.len() < edge_count {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let list: Vec<(AgentId, AgentId)> =
            edges.into_iter().map(|(a, b)| (AgentId::from_index(a), AgentId::from_index(b))).collect();
        Self::new(n, &list).expect("spanning tree makes it connected")
    }

    /// The fixed topology used by the routing experiments: 16 nodes, 24 edges.
    pub fn experiment_default() -> Self {
        Self::random_connected(16, 24, 0x5eed_0016)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> impl Iterator<Item = AgentId> {
        (0..self.adj.len()).map(AgentId::from_index)
    }

    pub fn neighbors(&self, node: AgentId) -> impl Iterator<Item = AgentId> + '_ {
        self.adj[node.index()].iter().map(|&i| AgentId::from_index(i))
    }

    pub fn adjacent(&self, a: AgentId, b: AgentId) -> bool {
        self.adj[a.index()].contains(&b.index())
    }

    pub fn distance(&self, a: AgentId, b: AgentId) -> usize {
        self.dist[a.index()][b.index()]
    }

    /// The neighbor closest to `to`, lowest id on ties.
    pub fn static_next_hop(&self, from: AgentId, to: AgentId) -> Result<AgentId, RoutingError> {
        self.neighbors(from)
            .min_by_key(|n| (self.distance(*n, to), *n))
            .ok_or(RoutingError::Unreachable { from, to })
    }

    pub fn edges(&self) -> Vec<(AgentId, AgentId)> {
        let mut out = Vec::new();
        for (a, ns) in self.adj.iter().enumerate() {
            for &b in ns.iter().filter(|b| **b > a) {
                out.push((AgentId::from_index(a), AgentId::from_index(b)));
            }
        }
        out
    }
}

fn bfs(adj: &[BTreeSet<usize>], s: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[s] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// `Q_x(d, y)` for every node `x`, destination `d` and neighbor `y` of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    alpha: f64,
    // q[x][d] maps neighbor -> estimate
    q: Vec<Vec<BTreeMap<usize, f64>>>,
}

impl QTable {
    pub fn new(topology: &RoutingTopology, alpha: f64) -> Self {
        let n = topology.node_count();
        let q = (0..n)
            .map(|x| (0..n).map(|_| topology.adj[x].iter().map(|&y| (y, 0.0)).collect()).collect())
            .collect();
        QTable { alpha, q }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    pub fn get(&self, node: AgentId, dest: AgentId, neighbor: AgentId) -> Option<f64> {
        self.q[node.index()][dest.index()].get(&neighbor.index()).copied()
    }

    /// `min_y Q_x(d, y)`, zero at the destination itself.
    pub fn best_estimate(&self, node: AgentId, dest: AgentId) -> f64 {
        if node == dest {
            return 0.0;
        }
        self.q[node.index()][dest.index()].values().copied().fold(f64::INFINITY, f64::min)
    }

    /// Greedy neighbor, lowest id on ties.
    pub fn greedy(&self, node: AgentId, dest: AgentId) -> Option<AgentId> {
        let mut best: Option<(usize, f64)> = None;
        for (&y, &v) in &self.q[node.index()][dest.index()] {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((y, v));
            }
        }
        best.map(|(y, _)| AgentId::from_index(y))
    }

    /// `Q ← Q + α(1 + remaining − Q)` on the single entry `(node, dest, chosen)`.
    pub fn update(&mut self, node: AgentId, dest: AgentId, chosen: AgentId, remaining: f64) -> Result<(), RoutingError> {
        let alpha = self.alpha;
        let entry = self.q[node.index()][dest.index()]
            .get_mut(&chosen.index())
            .ok_or(RoutingError::NotNeighbor { node, neighbor: chosen })?;
        *entry += alpha * (1.0 + remaining - *entry);
        Ok(())
    }

    /// One line per entry: `node dest neighbor estimate`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# node\tdest\tneighbor\testimate\n");
        for (x, per_dest) in self.q.iter().enumerate() {
            for (d, entries) in per_dest.iter().enumerate() {
                if x == d {
                    continue;
                }
                for (y, v) in entries {
                    out.push_str(&format!("{}\t{}\t{}\t{v:.6}\n", x + 1, d + 1, y + 1));
                }
            }
        }
        out
    }
}

/// Next hop under `mode`. Learned modes explore with probability `epsilon`,
/// never back to `previous` unless it is the only neighbor.
#[allow(clippy::too_many_arguments)]
pub fn route_hop<R: Rng>(
    topology: &RoutingTopology,
    qtable: &QTable,
    current: AgentId,
    destination: AgentId,
    mode: RoutingMode,
    epsilon: f64,
    previous: Option<AgentId>,
    rng: &mut R,
) -> Result<AgentId, RoutingError> {
    let unreachable = RoutingError::Unreachable { from: current, to: destination };
    if current == destination {
        return Err(unreachable);
    }
    match mode {
        RoutingMode::Static => topology.static_next_hop(current, destination),
        RoutingMode::Qlearning | RoutingMode::Adaptive => {
            if topology.adjacent(current, destination) && qtable.greedy(current, destination) == Some(destination) {
                return Ok(destination);
            }
            if rng.gen_bool(epsilon) {
                let pick = topology
                    .neighbors(current)
                    .filter(|n| Some(*n) != previous)
                    .choose(rng)
                    .or_else(|| topology.neighbors(current).next());
                if let Some(n) = pick {
                    return Ok(n);
                }
            }
            qtable.greedy(current, destination).ok_or(unreachable)
        }
    }
}

/// Training and evaluation knobs for the learned routers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub epsilon_floor: f64,
    pub epsilon_decay: f64,
    pub training_episodes: usize,
    /// Delivery times remembered by the adaptive router.
    pub window: usize,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            alpha: 0.5,
            epsilon: 0.1,
            epsilon_floor: 0.05,
            epsilon_decay: 0.9997,
            training_episodes: 10_000,
            window: 32,
        }
    }
}

/// A delivered (or abandoned) task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub path: Vec<AgentId>,
    pub delivered: bool,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }
}

/// A router for one mode. Learned routers keep learning while they route.
#[derive(Debug, Clone)]
pub struct Router {
    mode: RoutingMode,
    config: QConfig,
    table: QTable,
    epsilon: f64,
    recent: VecDeque<f64>,
    rng: ChaCha8Rng,
}

impl Router {
    pub fn new(topology: &RoutingTopology, mode: RoutingMode, config: QConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(mode as u64);
        Router {
            mode,
            config,
            table: QTable::new(topology, config.alpha),
            epsilon: config.epsilon,
            recent: VecDeque::new(),
            rng,
        }
    }

    pub fn mode(&self) -> RoutingMode {
        self.mode
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Runs the configured number of training episodes between random pairs.
    pub fn train(&mut self, topology: &RoutingTopology) {
        if self.mode == RoutingMode::Static {
            return;
        }
        let n = topology.node_count();
        for _ in 0..self.config.training_episodes {
            let src = self.rng.gen_range(0..n);
            let mut dst = self.rng.gen_range(0..n - 1);
            if dst >= src {
                dst += 1;
            }
            let budget = 4 * n;
            self.route(topology, AgentId::from_index(src), AgentId::from_index(dst), budget);
        }
    }

    /// Forwards one task, updating Q-values hop by hop. Gives up after
    /// `budget` hops.
    pub fn route(&mut self, topology: &RoutingTopology, src: AgentId, dst: AgentId, budget: usize) -> Route {
        let mut path = vec![src];
        let mut current = src;
        let mut previous = None;
        while current != dst && path.len() <= budget {
            let next = route_hop(topology, &self.table, current, dst, self.mode, self.epsilon, previous, &mut self.rng)
                .expect("connected topology");
            if self.mode != RoutingMode::Static {
                let remaining = self.table.best_estimate(next, dst);
                self.table.update(current, dst, next, remaining).expect("next is a neighbor");
            }
            previous = Some(current);
            current = next;
            path.push(next);
        }
        let delivered = current == dst;
        if self.mode != RoutingMode::Static {
            self.epsilon = (self.epsilon * self.config.epsilon_decay).max(self.config.epsilon_floor);
            if self.mode == RoutingMode::Adaptive {
                self.adapt((path.len() - 1) as f64);
            }
        }
        Route { path, delivered }
    }

    // α grows with the coefficient of variation of recent delivery times.
    fn adapt(&mut self, hops: f64) {
        self.recent.push_back(hops);
        if self.recent.len() > self.config.window {
            self.recent.pop_front();
        }
        if self.recent.len() < 2 {
            return;
        }
        let m = self.recent.len() as f64;
        let mean = self.recent.iter().sum::<f64>() / m;
        let var = self.recent.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        self.table.set_alpha((self.config.alpha * (1.0 + cv)).clamp(0.05, 1.0));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(i: u32) -> AgentId {
        AgentId::new(i).unwrap()
    }

    fn line3() -> RoutingTopology {
        RoutingTopology::new(3, &[(id(1), id(2)), (id(2), id(3))]).unwrap()
    }

    #[test]
    fn two_node_static() {
        let t = RoutingTopology::new(2, &[(id(1), id(2))]).unwrap();
        assert_eq!(t.static_next_hop(id(1), id(2)).unwrap(), id(2));
    }

    #[test]
    fn rejects_bad_topologies() {
        assert!(RoutingTopology::new(2, &[(id(1), id(1))]).is_err());
        assert!(RoutingTopology::new(3, &[(id(1), id(2))]).is_err());
    }

    #[test]
    fn default_topology_shape() {
        let t = RoutingTopology::experiment_default();
        assert_eq!(t.node_count(), 16);
        assert_eq!(t.edge_count(), 24);
        assert_eq!(t, RoutingTopology::experiment_default());
    }

    #[test]
    fn update_arithmetic() {
        let t = line3();
        let mut q = QTable::new(&t, 1.0);
        q.update(id(1), id(3), id(2), 0.0).unwrap();
        assert_eq!(q.get(id(1), id(3), id(2)), Some(1.0));
        let before = q.clone();
        q.set_alpha(0.0);
        q.update(id(2), id(3), id(1), 5.0).unwrap();
        assert_eq!(q.q, before.q);
        assert_eq!(q.update(id(1), id(3), id(3), 0.0), Err(RoutingError::NotNeighbor { node: id(1), neighbor: id(3) }));
    }

    #[test]
    fn static_path_matches_bfs_on_random_graphs() {
        for seed in 0..5 {
            let t = RoutingTopology::random_connected(12, 16, seed);
            let mut r = Router::new(&t, RoutingMode::Static, QConfig::default(), 0);
            for a in t.nodes() {
                for b in t.nodes().filter(|b| *b != a) {
                    let route = r.route(&t, a, b, 100);
                    assert!(route.delivered);
                    assert_eq!(route.hops(), t.distance(a, b));
                }
            }
        }
    }

    #[test]
    fn qtable_text_export() {
        let q = QTable::new(&line3(), 0.5);
        let text = q.to_text();
        assert!(text.starts_with("# node"));
        assert_eq!(text.lines().count(), 1 + 8);
    }
}
