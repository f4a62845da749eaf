//! Beacon chain validator reward pipeline: collection, joins and daily
//! roll-ups, decentralization indices, a synthetic reward simulator and
//! crosschecks against external references.

pub mod aggregate;
pub mod beacon_client;
pub mod chain_time;
pub mod metrics;
pub mod reward_model;
pub mod simulator;
pub mod table;
pub mod validate;

pub use chain_time::{ChainSpec, Epoch, Slot};
pub use reward_model::{Ether, Gwei};
