//! Mneme: a DAG ledger maintained by mobile devices.
//!
//! The crate contains the ledger data model, the two consensus protocols
//! (context proofs for blocks, equivalence proofs for epoch summaries), a
//! seeded slot-based simulator of a device-to-device network, adversary
//! strategies with their analytic bounds, and the analysis procedures used to
//! turn simulation runs into metric tables.

pub mod adversary;
pub mod analysis;
pub mod codec;
pub mod crypto;
pub mod geo;
pub mod ledger;
pub mod netsim;
pub mod poc;
pub mod poe;

/// Simulation time unit.
pub type Slot = u64;

/// Smallest indivisible unit of currency.
pub type Credits = u64;
