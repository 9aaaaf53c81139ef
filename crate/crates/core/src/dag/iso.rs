use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::contribution::{AgentId, Contribution, Rid};
use crate::semilattice::Value;

use super::ProvenanceDag;

/// Maps rids of the first graph to rids of the second.
pub type Bijection = BTreeMap<Rid, Rid>;

/// What a vertex must agree on to be matched: everything but rid and parents.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexLabel {
    pub creator: AgentId,
    pub creator_seq: u64,
    pub key: String,
    pub payload: Value,
}

impl VertexLabel {
    pub fn of(c: &Contribution) -> Self {
        VertexLabel {
            creator: c.creator(),
            creator_seq: c.creator_seq(),
            key: c.key().to_string(),
            payload: c.payload().clone(),
        }
    }
}

impl fmt::Display for VertexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "agent {} #{} key `{}` {}", self.creator, self.creator_seq, self.key, self.payload)
    }
}

struct Indexed {
    rids: Vec<Rid>,
    labels: Vec<VertexLabel>,
    parents: Vec<BTreeSet<usize>>,
    children: Vec<BTreeSet<usize>>,
    dangling: Vec<BTreeSet<Rid>>,
}

impl Indexed {
    fn new(g: &ProvenanceDag) -> Self {
        let items: Vec<&Contribution> = g.known().collect();
        let pos: BTreeMap<Rid, usize> = items.iter().enumerate().map(|(i, c)| (c.rid(), i)).collect();
        let n = items.len();
        let mut parents = vec![BTreeSet::new(); n];
        let mut children = vec![BTreeSet::new(); n];
        let mut dangling = vec![BTreeSet::new(); n];
        for (i, c) in items.iter().enumerate() {
            for p in c.parents() {
                match pos.get(p) {
                    Some(&j) => {
                        parents[i].insert(j);
                        children[j].insert(i);
                    }
                    None => {
                        dangling[i].insert(*p);
                    }
                }
            }
        }
        Indexed {
            rids: items.iter().map(|c| c.rid()).collect(),
            labels: items.iter().map(|c| VertexLabel::of(c)).collect(),
            parents,
            children,
            dangling,
        }
    }

    fn signature(&self, i: usize) -> (&VertexLabel, usize, usize, &BTreeSet<Rid>) {
        (&self.labels[i], self.parents[i].len(), self.children[i].len(), &self.dangling[i])
    }

    // Parents before children, ties by rid; buffered cycles cannot occur.
    fn search_order(&self) -> Vec<usize> {
        let n = self.rids.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(BTreeSet::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|i| indeg[*i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &self.children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }
}

/// Decides whether two histories are isomorphic: a bijection on vertices that
/// preserves labels, edges and dangling references.
///
/// Records that are identical rid for rid short-circuit to the identity.
/// Otherwise a backtracking search over label-compatible candidates runs,
/// pruned by degree and by consistency with the partial matching.
pub fn isomorphic(g1: &ProvenanceDag, g2: &ProvenanceDag) -> Option<Bijection> {
    if g1.known_rids() == g2.known_rids()
        && g1.known().zip(g2.known()).all(|(a, b)| a.same_content(b))
    {
        return Some(g1.known_rids().into_iter().map(|r| (r, r)).collect());
    }

    let a = Indexed::new(g1);
    let b = Indexed::new(g2);
    if a.rids.len() != b.rids.len() {
        return None;
    }
    let mut sig_a: Vec<_> = (0..a.rids.len()).map(|i| a.signature(i)).collect();
    let mut sig_b: Vec<_> = (0..b.rids.len()).map(|i| b.signature(i)).collect();
    sig_a.sort();
    sig_b.sort();
    if sig_a != sig_b {
        return None;
    }

    let order = a.search_order();
    if order.len() != a.rids.len() {
        return None;
    }
    let mut by_signature: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for j in 0..b.rids.len() {
        by_signature.entry(b.signature(j)).or_default().push(j);
    }
    let mut map = vec![usize::MAX; a.rids.len()];
    let mut used = vec![false; b.rids.len()];
    let mut mapped: Vec<usize> = Vec::new();

    if extend(&a, &b, &order, 0, &by_signature, &mut map, &mut used, &mut mapped) {
        Some(map.iter().enumerate().map(|(i, &j)| (a.rids[i], b.rids[j])).collect())
    } else {
        None
    }
}

#[allow(clippy::too_many_arguments)]
fn extend(
    a: &Indexed,
    b: &Indexed,
    order: &[usize],
    depth: usize,
    by_signature: &BTreeMap<(&VertexLabel, usize, usize, &BTreeSet<Rid>), Vec<usize>>,
    map: &mut [usize],
    used: &mut [bool],
    mapped: &mut Vec<usize>,
) -> bool {
    let Some(&v) = order.get(depth) else { return true };
    let Some(candidates) = by_signature.get(&a.signature(v)) else { return false };
    for &u in candidates {
        if used[u] {
            continue;
        }
        let consistent = mapped.iter().all(|&w| {
            let fw = map[w];
            a.parents[v].contains(&w) == b.parents[u].contains(&fw)
                && a.children[v].contains(&w) == b.children[u].contains(&fw)
        });
        if !consistent {
            continue;
        }
        map[v] = u;
        used[u] = true;
        mapped.push(v);
        if extend(a, b, order, depth + 1, by_signature, map, used, mapped) {
            return true;
        }
        mapped.pop();
        used[u] = false;
        map[v] = usize::MAX;
    }
    false
}
