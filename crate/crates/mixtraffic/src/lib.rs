//! Std companion to `mixtraffic-core`: scenario files, output writers,
//! policy checkpoints, penetration-rate sweeps and the experiment setups
//! used by the acceptance suite. The `mixtraffic` binary wraps all of it.

pub mod checkpoint;
pub mod experiments;
pub mod output;
pub mod scenario;
pub mod sweep;
