//! Derived values checked against independent reference computations.

use std::collections::{BTreeMap, BTreeSet};

use dcs_core::agent::AgentState;
use dcs_core::contribution::{content_rid, AgentId, Contribution, Rid};
use dcs_core::dag::ProvenanceDag;
use dcs_core::experiments::random_history;
use dcs_core::network::{run, NetworkConfig};
use dcs_core::policy::routing::{QConfig, QTable, Router, RoutingMode, RoutingTopology};
use dcs_core::policy::{apply_policy, OperationalPolicy};
use dcs_core::scenario::{Intent, KeySpec, ParentRule, Scenario};
use dcs_core::semilattice::{join_all, SpaceTag, Value};
use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn id(i: u32) -> AgentId {
    AgentId::new(i).unwrap()
}

fn closure(history: &[Contribution]) -> BTreeMap<(Rid, Rid), bool> {
    let rids: Vec<Rid> = history.iter().map(Contribution::rid).collect();
    let n = rids.len();
    let idx: BTreeMap<Rid, usize> = rids.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let mut reach = vec![vec![false; n]; n];
    for c in history {
        for p in c.parents() {
            reach[idx[p]][idx[&c.rid()]] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            out.insert((rids[i], rids[j]), reach[i][j]);
        }
    }
    out
}

#[test]
fn ancestry_matches_floyd_warshall() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let history = random_history(rng.gen_range(1..14), &mut rng);
        let dag = ProvenanceDag::from_contributions(&history).unwrap();
        let reach = closure(&history);
        for ((a, b), r) in &reach {
            assert_eq!(dag.is_ancestor(a, b).unwrap(), *r);
            let concurrent = a != b && !r && !reach[&(*b, *a)];
            assert_eq!(dag.are_concurrent(a, b).unwrap(), concurrent);
        }
    }
}

fn longest_path(history: &BTreeMap<Rid, Contribution>, r: &Rid) -> usize {
    history[r].parents().iter().map(|p| 1 + longest_path(history, p)).max().unwrap_or(0)
}

#[test]
fn layers_are_longest_path_depths() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let history = random_history(rng.gen_range(1..14), &mut rng);
        let by_rid: BTreeMap<Rid, Contribution> = history.iter().map(|c| (c.rid(), c.clone())).collect();
        let layers = ProvenanceDag::from_contributions(&history).unwrap().topological_layers().unwrap();
        for (depth, layer) in layers.iter().enumerate() {
            for r in layer {
                assert_eq!(longest_path(&by_rid, r), depth);
            }
        }
        assert_eq!(layers.iter().map(Vec::len).sum::<usize>(), history.len());
    }
}

#[test]
fn frontier_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let subs = BTreeMap::from([("a".to_string(), SpaceTag::Gset), ("b".to_string(), SpaceTag::Gset)]);
    for _ in 0..50 {
        let history = random_history(rng.gen_range(1..14), &mut rng);
        let reach = closure(&history);
        // a prefix is closed under parents, so it merges fully
        let prefix = &history[..rng.gen_range(0..=history.len())];
        let mut agent = AgentState::new(id(20), subs.clone());
        for c in prefix {
            agent.receive(c).unwrap();
        }
        for key in ["a", "b"] {
            let expected: BTreeSet<Rid> = prefix
                .iter()
                .filter(|c| c.key() == key)
                .filter(|c| !prefix.iter().any(|d| reach[&(c.rid(), d.rid())]))
                .map(Contribution::rid)
                .collect();
            assert_eq!(agent.local_frontier(key).unwrap(), expected);
        }
    }
}

#[test]
fn insertion_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let history = random_history(12, &mut rng);
    let reference = ProvenanceDag::from_contributions(&history).unwrap();
    for _ in 0..20 {
        let mut shuffled = history.clone();
        shuffled.shuffle(&mut rng);
        let dag = ProvenanceDag::from_contributions(&shuffled).unwrap();
        assert!(dag.is_sealed());
        assert_eq!(dag.vertices(), reference.vertices());
        assert_eq!(dag.edges().collect::<BTreeSet<_>>(), reference.edges().collect::<BTreeSet<_>>());
        assert_eq!(dag.topological_layers().unwrap(), reference.topological_layers().unwrap());
    }
}

#[test]
fn join_is_order_free_over_all_720_orders() {
    let values: Vec<Value> = ["a", "b", "c", "a", "d", "e"].iter().map(|e| Value::gset([*e])).collect();
    let expected = Value::gset(["a", "b", "c", "d", "e"]);
    let mut count = 0;
    for perm in values.iter().permutations(6) {
        assert_eq!(join_all(SpaceTag::Gset, perm).unwrap(), expected);
        count += 1;
    }
    assert_eq!(count, 720);
    let maxes: Vec<Value> = [3, 9, 1, 9, 0, 4].into_iter().map(Value::Maxint).collect();
    for perm in maxes.iter().permutations(6) {
        assert_eq!(join_all(SpaceTag::Maxint, perm).unwrap(), Value::Maxint(9));
    }
}

#[test]
fn rids_are_injective_over_1e5_inputs() {
    let mut seen = BTreeSet::new();
    for i in 0..100_000u32 {
        let creator = id(i % 7 + 1);
        let seq = u64::from(i / 7);
        // "k1" + "x" and "k" + "1x" style boundary shifts across key and payload
        let key = if i % 2 == 0 { "k1".to_string() } else { "k".to_string() };
        let payload = Value::gset([if i % 2 == 0 { "x".to_string() } else { "1x".to_string() }]);
        assert!(seen.insert(content_rid(creator, seq, &key, &BTreeSet::new(), &payload)));
    }
    assert_eq!(seen.len(), 100_000);
}

#[test]
fn rid_prefix_boundaries_do_not_collide() {
    let empty = BTreeSet::new();
    let a = content_rid(id(1), 0, "ab", &empty, &Value::gset(["c"]));
    let b = content_rid(id(1), 0, "a", &empty, &Value::gset(["bc"]));
    assert_ne!(a, b);
}

// Copies per send are geometric with p = 0.5 and no loss: mean 2, variance
// 2, so the mean over 1000 sends lies within 3 * sqrt(2 / 1000) = 0.134.
#[test]
fn duplicate_count_within_three_sigma() {
    let scenario = Scenario {
        name: "dup".into(),
        agents: 2,
        keys: BTreeMap::from([("k".into(), KeySpec { space: SpaceTag::Gset, subscribers: vec![] })]),
        intents: (0..1000)
            .map(|i| Intent {
                tick: i / 10,
                agent: id(1),
                key: "k".into(),
                payload: Value::gset([format!("e{i}")]),
                parents: ParentRule::Empty,
            })
            .collect(),
        crashes: vec![],
        network: NetworkConfig::default(),
        policy: OperationalPolicy::default(),
    };
    let cfg = NetworkConfig { duplicate: 0.5, max_reorder_delay: 3, seed: 77, ..NetworkConfig::default() };
    let rec = run(&scenario, &cfg).unwrap();
    let counts = rec.delivery_counts();
    let to_two: Vec<usize> = counts.iter().filter(|((a, _), _)| *a == id(2)).map(|(_, n)| *n).collect();
    assert_eq!(to_two.len(), 1000);
    let mean = to_two.iter().sum::<usize>() as f64 / 1000.0;
    assert!((mean - 2.0).abs() <= 0.134, "mean copies {mean}");
    assert_eq!(rec.agent(id(2)).value("k").unwrap(), rec.expected_value("k").unwrap());
}

// On the line 1 - 2 - 3 the fixed point is Q(x, d, y) = 1 + |y - d|.
fn line_truth(y: AgentId, d: u32) -> f64 {
    1.0 + f64::from(y.get().abs_diff(d))
}

#[test]
fn line_q_updates_reach_the_fixed_point() {
    let topo = RoutingTopology::new(3, &[(id(1), id(2)), (id(2), id(3))]).unwrap();
    let mut table = QTable::new(&topo, 0.5);
    let mut entries = Vec::new();
    for x in 1..=3u32 {
        for d in (1..=3u32).filter(|d| *d != x) {
            for y in topo.neighbors(id(x)) {
                entries.push((id(x), id(d), y));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let (x, d, y) = *entries.choose(&mut rng).unwrap();
        let remaining = table.best_estimate(y, d);
        table.update(x, d, y, remaining).unwrap();
    }
    for (x, d, y) in entries {
        let q = table.get(x, d, y).unwrap();
        assert!((q - line_truth(y, d.get())).abs() < 1e-3, "Q({x},{d},{y}) = {q}");
    }
}

#[test]
fn line_router_learns_hop_counts() {
    let topo = RoutingTopology::new(3, &[(id(1), id(2)), (id(2), id(3))]).unwrap();
    let mut router = Router::new(&topo, RoutingMode::Qlearning, QConfig::default(), 5);
    router.train(&topo);
    for x in 1..=3u32 {
        for d in (1..=3u32).filter(|d| *d != x) {
            let y = router.table().greedy(id(x), id(d)).unwrap();
            let q = router.table().get(id(x), id(d), y).unwrap();
            assert!((q - line_truth(y, d)).abs() < 1e-3, "Q({x},{d},{y}) = {q}");
            assert_eq!(f64::from(y.get().abs_diff(d)) + 1.0, f64::from(x.abs_diff(d)));
        }
    }
}

#[test]
fn trained_greedy_paths_match_bfs() {
    let topo = RoutingTopology::experiment_default();
    let mut router = Router::new(&topo, RoutingMode::Qlearning, QConfig::default(), 9);
    router.train(&topo);
    let (mut pairs, mut optimal) = (0, 0);
    for s in topo.nodes() {
        for d in topo.nodes() {
            if s == d {
                continue;
            }
            let mut cur = s;
            let mut hops = 0;
            while cur != d && hops <= 4 * topo.node_count() {
                cur = router.table().greedy(cur, d).unwrap();
                hops += 1;
            }
            assert_eq!(cur, d, "greedy walk from {s} to {d} loops");
            let bfs = topo.distance(s, d);
            assert!(hops >= bfs);
            pairs += 1;
            optimal += usize::from(hops == bfs);
        }
    }
    assert!(optimal * 10 >= pairs * 9, "{optimal}/{pairs} optimal");
}

#[test]
fn reordering_preserves_the_multiset() {
    let history = random_history(9, &mut ChaCha8Rng::seed_from_u64(6));
    for seed in 0..20 {
        let batches = apply_policy(&OperationalPolicy::reordering(seed), history.clone(), 3).unwrap();
        let mut out: Vec<Rid> = batches.into_iter().flatten().map(|c| c.rid()).collect();
        let mut input: Vec<Rid> = history.iter().map(Contribution::rid).collect();
        out.sort();
        input.sort();
        assert_eq!(out, input);
    }
}
