//! Observational equivalence by exhaustive querying.
//!
//! An outside observer identifies contributions by their labels (creator,
//! sequence number, key, payload) and may ask, for every pair of them,
//! whether one is an ancestor of the other, whether they are concurrent, and
//! whether one is a direct parent of the other; plus the join of all payloads
//! of each key. Two sealed histories are equivalent when some label-preserving
//! matching makes every answer agree.
//!
//! The direct-parent query is part of the class because ancestry alone cannot
//! tell apart two histories that differ only in a redundant edge.
//!
//! This deliberately shares nothing with [`super::isomorphic`] beyond the
//! label type, so the two can cross-check each other.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::contribution::Rid;
use crate::semilattice::{join_all, Value};

use super::iso::{Bijection, VertexLabel};
use super::{DagError, ProvenanceDag};

const MATCHING_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    /// How many contributions carry this label.
    Count(VertexLabel),
    IsAncestor { ancestor: Rid, descendant: Rid },
    AreConcurrent(Rid, Rid),
    IsParent { parent: Rid, child: Rid },
    JoinAll { key: String },
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Count(l) => write!(f, "count({l})"),
            Query::IsAncestor { ancestor, descendant } => {
                write!(f, "is_ancestor({}, {})", ancestor.short(), descendant.short())
            }
            Query::AreConcurrent(a, b) => write!(f, "are_concurrent({}, {})", a.short(), b.short()),
            Query::IsParent { parent, child } => write!(f, "is_parent({}, {})", parent.short(), child.short()),
            Query::JoinAll { key } => write!(f, "join_all(`{key}`)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Bool(bool),
    Count(usize),
    Value(Option<Value>),
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Bool(b) => write!(f, "{b}"),
            Answer::Count(n) => write!(f, "{n}"),
            Answer::Value(Some(v)) => write!(f, "{v}"),
            Answer::Value(None) => f.write_str("<no contributions>"),
        }
    }
}

/// A query phrased over the first history (rids mapped into the second by
/// the matching in force) together with both answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub query: Query,
    pub first: Answer,
    pub second: Answer,
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} vs {}", self.query, self.first, self.second)
    }
}

struct View<'a> {
    dag: &'a ProvenanceDag,
    ancestors: BTreeMap<Rid, BTreeSet<Rid>>,
}

impl<'a> View<'a> {
    fn new(dag: &'a ProvenanceDag) -> Result<Self, DagError> {
        let mut ancestors = BTreeMap::new();
        for r in dag.vertices().keys() {
            ancestors.insert(*r, dag.ancestors(r)?);
        }
        Ok(View { dag, ancestors })
    }

    fn is_ancestor(&self, a: &Rid, b: &Rid) -> bool {
        self.ancestors[b].contains(a)
    }

    fn concurrent(&self, a: &Rid, b: &Rid) -> bool {
        a != b && !self.is_ancestor(a, b) && !self.is_ancestor(b, a)
    }

    fn is_parent(&self, p: &Rid, c: &Rid) -> bool {
        self.dag.vertices()[c].parents().contains(p)
    }

    fn aggregates(&self) -> BTreeMap<String, Option<Value>> {
        let mut by_key: BTreeMap<String, Vec<&Value>> = BTreeMap::new();
        for c in self.dag.vertices().values() {
            by_key.entry(c.key().to_string()).or_default().push(c.payload());
        }
        by_key
            .into_iter()
            .map(|(k, vals)| {
                let space = vals[0].space();
                (k, join_all(space, vals.iter().copied()).ok())
            })
            .collect()
    }

    fn label_classes(&self) -> BTreeMap<VertexLabel, Vec<Rid>> {
        let mut classes: BTreeMap<VertexLabel, Vec<Rid>> = BTreeMap::new();
        for c in self.dag.vertices().values() {
            classes.entry(VertexLabel::of(c)).or_default().push(c.rid());
        }
        classes
    }
}

/// Result of [`observationally_equivalent`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationReport {
    /// The matching under which every query agreed, if any.
    pub matching: Option<Bijection>,
    /// A query answered differently, when no matching works.
    pub witness: Option<Observation>,
}

impl ObservationReport {
    pub fn equivalent(&self) -> bool {
        self.matching.is_some()
    }
}

/// Exhausts the query class over every label-preserving matching.
pub fn observationally_equivalent(g1: &ProvenanceDag, g2: &ProvenanceDag) -> Result<ObservationReport, DagError> {
    g1.require_sealed()?;
    g2.require_sealed()?;
    let v1 = View::new(g1)?;
    let v2 = View::new(g2)?;

    let classes1 = v1.label_classes();
    let classes2 = v2.label_classes();
    let labels: BTreeSet<&VertexLabel> = classes1.keys().chain(classes2.keys()).collect();
    for label in labels {
        let n1 = classes1.get(label).map_or(0, Vec::len);
        let n2 = classes2.get(label).map_or(0, Vec::len);
        if n1 != n2 {
            return Ok(ObservationReport {
                matching: None,
                witness: Some(Observation {
                    query: Query::Count(label.clone()),
                    first: Answer::Count(n1),
                    second: Answer::Count(n2),
                }),
            });
        }
    }

    let mut combinations: u128 = 1;
    for members in classes1.values() {
        combinations = combinations.saturating_mul((1..=members.len() as u128).product::<u128>());
    }
    if combinations > MATCHING_BUDGET {
        return Err(DagError::MatchingBudget(combinations));
    }

    let agg1 = v1.aggregates();
    let agg2 = v2.aggregates();
    let order: Vec<Rid> = g1.vertices().keys().copied().collect();

    let mut first_witness = None;
    for matching in matchings(&classes1, &classes2) {
        match first_disagreement(&v1, &v2, &order, &matching, &agg1, &agg2) {
            None => return Ok(ObservationReport { matching: Some(matching), witness: None }),
            Some(obs) => {
                first_witness.get_or_insert(obs);
            }
        }
    }
    Ok(ObservationReport { matching: None, witness: first_witness })
}

fn first_disagreement(
    v1: &View<'_>,
    v2: &View<'_>,
    order: &[Rid],
    m: &Bijection,
    agg1: &BTreeMap<String, Option<Value>>,
    agg2: &BTreeMap<String, Option<Value>>,
) -> Option<Observation> {
    let differ = |query: Query, a: bool, b: bool| {
        (a != b).then_some(Observation { query, first: Answer::Bool(a), second: Answer::Bool(b) })
    };
    // Ancestry first, so a structural difference is reported as such.
    let pairs = || order.iter().flat_map(|a| order.iter().map(move |b| (a, b)));
    for (a, b) in pairs() {
        let obs = differ(
            Query::IsAncestor { ancestor: *a, descendant: *b },
            v1.is_ancestor(a, b),
            v2.is_ancestor(&m[a], &m[b]),
        );
        if obs.is_some() {
            return obs;
        }
    }
    for (a, b) in pairs() {
        let obs = differ(Query::AreConcurrent(*a, *b), v1.concurrent(a, b), v2.concurrent(&m[a], &m[b]));
        if obs.is_some() {
            return obs;
        }
    }
    for (a, b) in pairs() {
        let obs = differ(Query::IsParent { parent: *a, child: *b }, v1.is_parent(a, b), v2.is_parent(&m[a], &m[b]));
        if obs.is_some() {
            return obs;
        }
    }
    let keys: BTreeSet<&String> = agg1.keys().chain(agg2.keys()).collect();
    for k in keys {
        let x = agg1.get(k).cloned().flatten();
        let y = agg2.get(k).cloned().flatten();
        if x != y {
            return Some(Observation {
                query: Query::JoinAll { key: k.clone() },
                first: Answer::Value(x),
                second: Answer::Value(y),
            });
        }
    }
    None
}

/// All bijections that map each label class of the first history onto the
/// same class of the second. Class sizes are assumed equal.
fn matchings(
    classes1: &BTreeMap<VertexLabel, Vec<Rid>>,
    classes2: &BTreeMap<VertexLabel, Vec<Rid>>,
) -> impl Iterator<Item = Bijection> {
    let per_class: Vec<(Vec<Rid>, Vec<Vec<Rid>>)> = classes1
        .iter()
        .map(|(label, members)| (members.clone(), permutations(&classes2[label])))
        .collect();
    let total: usize = per_class.iter().map(|(_, perms)| perms.len()).product();
    (0..total).map(move |mut idx| {
        let mut m = Bijection::new();
        for (members, perms) in &per_class {
            let perm = &perms[idx % perms.len()];
            idx /= perms.len();
            m.extend(members.iter().copied().zip(perm.iter().copied()));
        }
        m
    })
}

fn permutations(items: &[Rid]) -> Vec<Vec<Rid>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}
