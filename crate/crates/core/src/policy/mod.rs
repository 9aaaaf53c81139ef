//! Operational policies: how an agent's outgoing contributions are ordered
//! and batched, and in which order simultaneous deliveries are processed.
//!
//! Policies see contributions only as opaque records. [`apply_policy`]
//! checks that its output is a partition of its input.

pub mod routing;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contribution::Contribution;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("PolicyTamper: policy `{0}` did not return a partition of its outbox")]
    PolicyTamper(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dispatch {
    /// One batch per contribution, in creation order.
    Fifo,
    /// Consecutive groups of the given size.
    Batching(usize),
    /// A seeded shuffle, one contribution per batch.
    Reordering(u64),
}

/// Among deliveries due at the same tick: oldest send first, or newest first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryOrder {
    #[default]
    Fifo,
    Lifo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationalPolicy {
    pub dispatch: Dispatch,
    #[serde(default)]
    pub delivery: DeliveryOrder,
}

impl Default for OperationalPolicy {
    fn default() -> Self {
        OperationalPolicy::fifo()
    }
}

impl OperationalPolicy {
    pub fn fifo() -> Self {
        OperationalPolicy { dispatch: Dispatch::Fifo, delivery: DeliveryOrder::Fifo }
    }

    pub fn batching(size: usize) -> Self {
        OperationalPolicy { dispatch: Dispatch::Batching(size.max(1)), delivery: DeliveryOrder::Fifo }
    }

    pub fn reordering(seed: u64) -> Self {
        OperationalPolicy { dispatch: Dispatch::Reordering(seed), delivery: DeliveryOrder::Lifo }
    }

    pub fn with_delivery(mut self, delivery: DeliveryOrder) -> Self {
        self.delivery = delivery;
        self
    }

    pub fn tag(&self) -> String {
        let d = match self.dispatch {
            Dispatch::Fifo => "fifo".to_string(),
            Dispatch::Batching(n) => format!("batching({n})"),
            Dispatch::Reordering(s) => format!("reordering({s})"),
        };
        match self.delivery {
            DeliveryOrder::Fifo => d,
            DeliveryOrder::Lifo => format!("{d}/lifo"),
        }
    }
}

impl fmt::Display for OperationalPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// Splits an outbox into send batches. `salt` varies the reordering shuffle
/// between flushes (the simulator passes agent and tick).
pub fn apply_policy(
    policy: &OperationalPolicy,
    outbox: Vec<Contribution>,
    salt: u64,
) -> Result<Vec<Vec<Contribution>>, PolicyError> {
    let batches = dispatch(policy.dispatch, outbox.clone(), salt);
    check_partition(policy, &outbox, &batches)?;
    Ok(batches)
}

fn dispatch(rule: Dispatch, mut outbox: Vec<Contribution>, salt: u64) -> Vec<Vec<Contribution>> {
    match rule {
        Dispatch::Fifo => outbox.into_iter().map(|c| vec![c]).collect(),
        Dispatch::Batching(n) => outbox.chunks(n.max(1)).map(<[Contribution]>::to_vec).collect(),
        Dispatch::Reordering(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(salt);
            outbox.shuffle(&mut rng);
            outbox.into_iter().map(|c| vec![c]).collect()
        }
    }
}

fn check_partition(policy: &OperationalPolicy, input: &[Contribution], batches: &[Vec<Contribution>]) -> Result<(), PolicyError> {
    let mut a: Vec<&Contribution> = input.iter().collect();
    let mut b: Vec<&Contribution> = batches.iter().flatten().collect();
    a.sort_by_key(|c| c.rid());
    b.sort_by_key(|c| c.rid());
    let same = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.rid() == y.rid() && x.same_content(y));
    if same && batches.iter().all(|batch| !batch.is_empty()) {
        Ok(())
    } else {
        Err(PolicyError::PolicyTamper(policy.tag()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::root;

    fn abc() -> Vec<Contribution> {
        vec![root(1, "a"), root(1, "b"), root(1, "c")]
    }

    #[test]
    fn fifo_singletons() {
        let out = apply_policy(&OperationalPolicy::fifo(), abc(), 0).unwrap();
        let got: Vec<Vec<String>> =
            out.iter().map(|b| b.iter().map(|c| c.payload().to_string()).collect()).collect();
        assert_eq!(got, vec![vec!["gset{a}"], vec!["gset{b}"], vec!["gset{c}"]]);
    }

    #[test]
    fn batching_two() {
        let out = apply_policy(&OperationalPolicy::batching(2), abc(), 0).unwrap();
        assert_eq!(out.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 1]);
        assert_eq!(out[0][1].payload().to_string(), "gset{b}");
    }

    #[test]
    fn reordering_preserves_multiset() {
        let input: Vec<Contribution> = (0..20).map(|i| root(1, &format!("e{i}"))).collect();
        for salt in 0..10 {
            let out = apply_policy(&OperationalPolicy::reordering(7), input.clone(), salt).unwrap();
            let mut got: Vec<_> = out.into_iter().flatten().map(|c| c.rid()).collect();
            let mut want: Vec<_> = input.iter().map(|c| c.rid()).collect();
            got.sort();
            want.sort();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn tamper_detected() {
        let input = abc();
        let mut bad = vec![vec![input[0].clone()], vec![input[0].clone()]];
        assert!(check_partition(&OperationalPolicy::fifo(), &input, &bad).is_err());
        bad = vec![vec![input[0].clone(), input[1].clone(), input[2].clone()], vec![]];
        assert!(check_partition(&OperationalPolicy::fifo(), &input, &bad).is_err());
    }

    #[test]
    fn tags() {
        assert_eq!(OperationalPolicy::batching(2).tag(), "batching(2)");
        assert_eq!(OperationalPolicy::fifo().with_delivery(DeliveryOrder::Lifo).tag(), "fifo/lifo");
    }
}
