//! Synthetic users and the ablation benchmark.

pub mod ablation;
pub mod corpus;
pub mod hand;
pub mod jitter;
pub mod metrics;
pub mod pilot;
pub mod trial;
