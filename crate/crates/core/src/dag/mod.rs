//! Provenance DAG: vertices are contributions, edges run from each parent to
//! its child.
//!
//! Insertion is append-only. A contribution whose parents have not all
//! arrived is buffered and committed as soon as the last one does, so the
//! network may deliver in any order. A DAG with an empty buffer is *sealed*.
//! Insertions that would close a cycle are rejected, which is only reachable
//! with forged records.

mod export;
mod iso;
mod observe;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::contribution::{Contribution, Rid};

pub use export::{to_dot, to_layered_text};
pub use iso::{isomorphic, Bijection, VertexLabel};
pub use observe::{observationally_equivalent, Answer, Observation, ObservationReport, Query};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("RidCollision: {0} already present with different content")]
    RidCollision(Rid),
    #[error("CycleDetected: {0} <-> {1}")]
    CycleDetected(Rid, Rid),
    #[error("unknown rid {0}")]
    UnknownRid(Rid),
    #[error("dag is not sealed: {0} contribution(s) still wait for parents")]
    UnsealedDag(usize),
    #[error("too many candidate matchings ({0}) for exhaustive observation")]
    MatchingBudget(u128),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    /// The contribution and possibly some buffered descendants were committed.
    Committed(Vec<Rid>),
    /// Some parents are missing; held until they arrive.
    Buffered,
    /// Identical record already present.
    Duplicate,
}

/// A batch of contributions plus the rids they reference but do not contain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DagDelta {
    pub contributions: Vec<Contribution>,
    pub dangling: BTreeSet<Rid>,
}

impl DagDelta {
    pub fn new(contributions: Vec<Contribution>) -> Self {
        let present: BTreeSet<Rid> = contributions.iter().map(Contribution::rid).collect();
        let dangling = contributions
            .iter()
            .flat_map(|c| c.parents().iter().copied())
            .filter(|p| !present.contains(p))
            .collect();
        DagDelta { contributions, dangling }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProvenanceDag {
    vertices: BTreeMap<Rid, Contribution>,
    children: BTreeMap<Rid, BTreeSet<Rid>>,
    buffered: BTreeMap<Rid, Contribution>,
    waiting_on: BTreeMap<Rid, BTreeSet<Rid>>,
}

impl ProvenanceDag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts all contributions in order, failing on the first error.
    pub fn from_contributions<'a>(items: impl IntoIterator<Item = &'a Contribution>) -> Result<Self, DagError> {
        let mut dag = Self::new();
        for c in items {
            dag.insert(c.clone())?;
        }
        Ok(dag)
    }

    pub fn insert(&mut self, c: Contribution) -> Result<InsertOutcome, DagError> {
        let rid = c.rid();
        if let Some(existing) = self.get(&rid) {
            return if existing.same_content(&c) {
                Ok(InsertOutcome::Duplicate)
            } else {
                Err(DagError::RidCollision(rid))
            };
        }
        if c.parents().contains(&rid) {
            return Err(DagError::CycleDetected(rid, rid));
        }
        if let Some(via) = self.buffered_path_back(&c) {
            return Err(DagError::CycleDetected(rid, via));
        }

        let missing: Vec<Rid> = c.parents().iter().filter(|p| !self.vertices.contains_key(p)).copied().collect();
        if missing.is_empty() {
            Ok(InsertOutcome::Committed(self.commit(c)))
        } else {
            for p in missing {
                self.waiting_on.entry(p).or_default().insert(rid);
            }
            self.buffered.insert(rid, c);
            Ok(InsertOutcome::Buffered)
        }
    }

    pub fn apply(&mut self, delta: DagDelta) -> Result<(), DagError> {
        for c in delta.contributions {
            self.insert(c)?;
        }
        Ok(())
    }

    /// Buffered contributions and the rids they are waiting for.
    pub fn buffered_delta(&self) -> DagDelta {
        DagDelta { contributions: self.buffered.values().cloned().collect(), dangling: self.dangling() }
    }

    // Only buffered records can name a rid that is not yet known, so a cycle
    // through `c` must run through the buffer. Returns the parent of `c`
    // from which `c` is reachable.
    fn buffered_path_back(&self, c: &Contribution) -> Option<Rid> {
        let target = c.rid();
        for &start in c.parents() {
            let mut stack = vec![start];
            let mut seen = BTreeSet::new();
            while let Some(r) = stack.pop() {
                if !seen.insert(r) {
                    continue;
                }
                let Some(b) = self.buffered.get(&r) else { continue };
                for &p in b.parents() {
                    if p == target {
                        return Some(start);
                    }
                    stack.push(p);
                }
            }
        }
        None
    }

    fn commit(&mut self, c: Contribution) -> Vec<Rid> {
        let mut committed = Vec::new();
        let mut work = vec![c];
        while let Some(c) = work.pop() {
            let rid = c.rid();
            for &p in c.parents() {
                self.children.entry(p).or_default().insert(rid);
            }
            self.vertices.insert(rid, c);
            committed.push(rid);
            for w in self.waiting_on.remove(&rid).unwrap_or_default() {
                let ready = self.buffered[&w].parents().iter().all(|p| self.vertices.contains_key(p));
                if ready {
                    work.push(self.buffered.remove(&w).expect("buffered"));
                }
            }
        }
        committed
    }

    pub fn is_sealed(&self) -> bool {
        self.buffered.is_empty()
    }

    pub fn require_sealed(&self) -> Result<(), DagError> {
        if self.is_sealed() {
            Ok(())
        } else {
            Err(DagError::UnsealedDag(self.buffered.len()))
        }
    }

    /// Referenced rids that are neither committed nor buffered.
    pub fn dangling(&self) -> BTreeSet<Rid> {
        self.waiting_on.keys().filter(|r| !self.buffered.contains_key(r)).copied().collect()
    }

    /// Committed or buffered.
    pub fn get(&self, rid: &Rid) -> Option<&Contribution> {
        self.vertices.get(rid).or_else(|| self.buffered.get(rid))
    }

    pub fn contains(&self, rid: &Rid) -> bool {
        self.get(rid).is_some()
    }

    /// Committed vertices.
    pub fn vertices(&self) -> &BTreeMap<Rid, Contribution> {
        &self.vertices
    }

    pub fn buffered(&self) -> &BTreeMap<Rid, Contribution> {
        &self.buffered
    }

    /// Committed and buffered contributions in rid order.
    pub fn known(&self) -> impl Iterator<Item = &Contribution> {
        let mut all: Vec<&Contribution> = self.vertices.values().chain(self.buffered.values()).collect();
        all.sort_by_key(|c| c.rid());
        all.into_iter()
    }

    pub fn known_rids(&self) -> BTreeSet<Rid> {
        self.vertices.keys().chain(self.buffered.keys()).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.buffered.is_empty()
    }

    /// Committed edges `(parent, child)` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (Rid, Rid)> + '_ {
        self.children.iter().flat_map(|(p, cs)| cs.iter().map(move |c| (*p, *c)))
    }

    pub fn edge_count(&self) -> usize {
        self.children.values().map(BTreeSet::len).sum()
    }

    pub fn children(&self, rid: &Rid) -> impl Iterator<Item = Rid> + '_ {
        self.children.get(rid).into_iter().flatten().copied()
    }

    fn require(&self, rid: &Rid) -> Result<&Contribution, DagError> {
        self.get(rid).ok_or(DagError::UnknownRid(*rid))
    }

    /// Strict ancestors of `rid` among known contributions.
    pub fn ancestors(&self, rid: &Rid) -> Result<BTreeSet<Rid>, DagError> {
        let start = self.require(rid)?;
        let mut out = BTreeSet::new();
        let mut stack: Vec<Rid> = start.parents().iter().copied().collect();
        while let Some(r) = stack.pop() {
            if let Some(c) = self.get(&r) {
                if out.insert(r) {
                    stack.extend(c.parents().iter().copied());
                }
            }
        }
        Ok(out)
    }

    /// Strict ancestry: a rid is never its own ancestor.
    pub fn is_ancestor(&self, ancestor: &Rid, descendant: &Rid) -> Result<bool, DagError> {
        self.require(ancestor)?;
        Ok(self.ancestors(descendant)?.contains(ancestor))
    }

    pub fn are_concurrent(&self, a: &Rid, b: &Rid) -> Result<bool, DagError> {
        if a == b {
            self.require(a)?;
            return Ok(false);
        }
        Ok(!self.is_ancestor(a, b)? && !self.is_ancestor(b, a)?)
    }

    /// Antichain layering by longest path from a root; rids sorted within a layer.
    pub fn topological_layers(&self) -> Result<Vec<Vec<Rid>>, DagError> {
        self.require_sealed()?;
        let mut depth: BTreeMap<Rid, usize> = BTreeMap::new();
        // Kahn's algorithm over committed vertices.
        let mut indegree: BTreeMap<Rid, usize> =
            self.vertices.iter().map(|(r, c)| (*r, c.parents().len())).collect();
        let mut ready: Vec<Rid> = indegree.iter().filter(|(_, d)| **d == 0).map(|(r, _)| *r).collect();
        while let Some(r) = ready.pop() {
            let d = self.vertices[&r].parents().iter().map(|p| depth[p] + 1).max().unwrap_or(0);
            depth.insert(r, d);
            for c in self.children(&r) {
                let e = indegree.get_mut(&c).expect("child is committed");
                *e -= 1;
                if *e == 0 {
                    ready.push(c);
                }
            }
        }
        let mut layers: Vec<Vec<Rid>> = Vec::new();
        for (r, d) in depth {
            if layers.len() <= d {
                layers.resize_with(d + 1, Vec::new);
            }
            layers[d].push(r);
        }
        Ok(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contribution::AgentId;
    use crate::semilattice::Value;
    use crate::testutil::{chain, rid_of, root};

    #[test]
    fn root_insert() {
        let mut dag = ProvenanceDag::new();
        let rx = root(1, "x");
        assert_eq!(dag.insert(rx.clone()).unwrap(), InsertOutcome::Committed(vec![rx.rid()]));
        assert_eq!((dag.len(), dag.edge_count()), (1, 0));
        assert_eq!(dag.insert(rx).unwrap(), InsertOutcome::Duplicate);
    }

    #[test]
    fn chain_insert_and_queries() {
        let ry = root(2, "y");
        let rxy = chain(1, "x", &[&ry]);
        let dag = ProvenanceDag::from_contributions([&ry, &rxy]).unwrap();
        assert_eq!(dag.edges().collect::<Vec<_>>(), vec![(ry.rid(), rxy.rid())]);
        assert!(dag.is_ancestor(&ry.rid(), &rxy.rid()).unwrap());
        assert!(!dag.is_ancestor(&rxy.rid(), &ry.rid()).unwrap());
        assert!(!dag.is_ancestor(&ry.rid(), &ry.rid()).unwrap());
        assert!(!dag.are_concurrent(&ry.rid(), &rxy.rid()).unwrap());
        assert!(!dag.are_concurrent(&ry.rid(), &ry.rid()).unwrap());
        assert_eq!(dag.topological_layers().unwrap(), vec![vec![ry.rid()], vec![rxy.rid()]]);
    }

    #[test]
    fn concurrent_roots() {
        let rx = root(1, "x");
        let ry = root(2, "y");
        let dag = ProvenanceDag::from_contributions([&rx, &ry]).unwrap();
        assert!(dag.are_concurrent(&rx.rid(), &ry.rid()).unwrap());
        let mut layer = vec![rx.rid(), ry.rid()];
        layer.sort();
        assert_eq!(dag.topological_layers().unwrap(), vec![layer]);
    }

    #[test]
    fn unknown_rid() {
        let dag = ProvenanceDag::new();
        let r = Rid::from_bytes([1; 32]);
        assert_eq!(dag.is_ancestor(&r, &r), Err(DagError::UnknownRid(r)));
        assert_eq!(dag.are_concurrent(&r, &r), Err(DagError::UnknownRid(r)));
    }

    #[test]
    fn out_of_order_delivery_is_buffered() {
        let a = root(1, "a");
        let b = chain(2, "b", &[&a]);
        let c = chain(3, "c", &[&b]);
        let mut dag = ProvenanceDag::new();
        assert_eq!(dag.insert(c.clone()).unwrap(), InsertOutcome::Buffered);
        assert_eq!(dag.insert(b.clone()).unwrap(), InsertOutcome::Buffered);
        assert_eq!(dag.dangling(), BTreeSet::from([a.rid()]));
        assert!(!dag.is_sealed());
        assert!(matches!(dag.topological_layers(), Err(DagError::UnsealedDag(2))));
        // ancestry already answerable through the buffer
        assert!(dag.is_ancestor(&b.rid(), &c.rid()).unwrap());
        let InsertOutcome::Committed(done) = dag.insert(a.clone()).unwrap() else { panic!() };
        assert_eq!(done.len(), 3);
        assert!(dag.is_sealed());
        assert_eq!(dag, ProvenanceDag::from_contributions([&a, &b, &c]).unwrap());
    }

    #[test]
    fn forged_mutual_parents_detected() {
        let r1 = Rid::from_bytes([1; 32]);
        let r2 = Rid::from_bytes([2; 32]);
        let one = AgentId::new(1).unwrap();
        let c1 = Contribution::assemble(r1, one, 0, "k".into(), BTreeSet::from([r2]), Value::gset(["1"]));
        let c2 = Contribution::assemble(r2, one, 1, "k".into(), BTreeSet::from([r1]), Value::gset(["2"]));
        let mut dag = ProvenanceDag::new();
        assert_eq!(dag.insert(c1).unwrap(), InsertOutcome::Buffered);
        assert_eq!(dag.insert(c2), Err(DagError::CycleDetected(r2, r1)));
        let selfish = Contribution::assemble(r2, one, 1, "k".into(), BTreeSet::from([r2]), Value::gset(["2"]));
        assert_eq!(ProvenanceDag::new().insert(selfish), Err(DagError::CycleDetected(r2, r2)));
    }

    #[test]
    fn collision_rejected() {
        let a = root(1, "a");
        let mut dag = ProvenanceDag::from_contributions([&a]).unwrap();
        let imposter = Contribution::assemble(a.rid(), a.creator(), 0, "k".into(), BTreeSet::new(), Value::gset(["z"]));
        assert_eq!(dag.insert(imposter), Err(DagError::RidCollision(a.rid())));
        assert_eq!(rid_of(&a), a.rid());
    }

    #[test]
    fn delta_dangling() {
        let a = root(1, "a");
        let b = chain(2, "b", &[&a]);
        let delta = DagDelta::new(vec![b.clone()]);
        assert_eq!(delta.dangling, BTreeSet::from([a.rid()]));
        let mut dag = ProvenanceDag::new();
        dag.apply(delta).unwrap();
        assert_eq!(dag.buffered_delta().dangling, BTreeSet::from([a.rid()]));
        dag.apply(DagDelta::new(vec![a])).unwrap();
        assert!(dag.buffered_delta().contributions.is_empty());
    }
}
