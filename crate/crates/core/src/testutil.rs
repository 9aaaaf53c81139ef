//! Small builders shared by unit tests.

use std::collections::BTreeSet;

use crate::contribution::{make_contribution, AgentId, Contribution, Rid};
use crate::semilattice::{SpaceTag, Value};

/// A parentless gset contribution on key `k`.
pub fn root(creator: u32, elem: &str) -> Contribution {
    chain(creator, elem, &[])
}

/// A gset contribution on key `k` whose parents are `parents`.
pub fn chain(creator: u32, elem: &str, parents: &[&Contribution]) -> Contribution {
    let parents: BTreeSet<Rid> = parents.iter().map(|p| p.rid()).collect();
    make_contribution(
        AgentId::new(creator).unwrap(),
        0,
        "k",
        parents.clone(),
        Value::gset([elem]),
        SpaceTag::Gset,
        &parents,
    )
    .unwrap()
}

pub fn rid_of(c: &Contribution) -> Rid {
    c.rid()
}
