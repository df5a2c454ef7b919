//! Exact Markov-chain analysis and simulation of cache eviction policies.
//!
//! The crate models LRU, FIFO, RANDOM, CLIMB, k-LRU, LRU(m), ARC and A-LRU as
//! finite state machines and provides stationary laws, hit probabilities,
//! generalized Kendall-tau distances to the ideal cache, mixing-time
//! estimates and bounds, and the combined learning error.

pub mod error;
pub mod model;
pub mod policies;
pub mod chain;
pub mod rankmetrics;
pub mod mixing;
pub mod workload;
pub mod experiments;

pub use error::{Error, Result};
