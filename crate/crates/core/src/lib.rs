//! Proximity-graph indexes for approximate nearest neighbour search, built
//! many-at-once with shared distance computations, plus a batch
//! multi-objective Bayesian tuner for their construction parameters.
pub mod bench;
pub mod builder;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod params;
pub mod prune;
pub mod tuner;

pub use error::{Error, Result};
