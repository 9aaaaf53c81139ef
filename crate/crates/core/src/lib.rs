//! Immutable contributions, join-semilattice state, provenance histories and
//! a deterministic simulator to exercise them.

pub mod agent;
pub mod contribution;
pub mod dag;
pub mod experiments;
pub mod laws;
pub mod log;
pub mod network;
pub mod policy;
pub mod record;
pub mod report;
pub mod scenario;
pub mod semilattice;
pub mod violations;

#[cfg(test)]
mod testutil;
