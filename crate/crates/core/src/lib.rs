//! Discrete-time load balancing over heterogeneous parallel queues.
//!
//! The crate covers the queue dynamics ([`model`]), a family of dispatching
//! policies built from a sorting step and a decision step ([`policy`]),
//! their dispatch-fraction tables ([`fvector`]), exact stability analysis
//! ([`stability`]) and heavy-traffic simulation ([`sim`]).

pub mod error;
pub mod fvector;
pub mod model;
pub mod perm;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
