//! Mixed-autonomy traffic control core.
//!
//! Two layers run on top of a small microsimulator:
//!
//! * a per-intersection control layer where queue-leading robot vehicles
//!   (RVs) choose Stop/Go from an observation that carries a conflict threat
//!   vector, rewarded by a multi-objective signal (ego wait, queue parity,
//!   threat, hard conflict penalty), with a grant-based safety override;
//! * a routing layer where a coverage coordinator predicts per-edge RV
//!   shortage and broadcasts discounted edge costs, and each RV decides
//!   locally whether to adopt a cheaper route within a detour bound.
//!
//! The crate is `no_std` (with `alloc`). File formats, the CLI and sweeps
//! live in the `mixtraffic` companion crate.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod agent;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod net;
pub mod reward;
pub mod rng;
pub mod routing;
pub mod sim;

pub use error::{Error, Result};

/// Number of approach slots in the fixed-width observation layout.
pub const APPROACH_SLOTS: usize = 8;

/// Vehicle class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum VehicleClass {
    /// Robot vehicle: policy-controlled in control zones, reroutable.
    Rv,
    /// Human-driven vehicle: IDM car-following everywhere.
    Hv,
}

impl VehicleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Rv => "RV",
            VehicleClass::Hv => "HV",
        }
    }
}

/// The two control actions available to an RV inside a control zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Action {
    Stop,
    Go,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Stop, Action::Go];

    pub fn index(self) -> usize {
        match self {
            Action::Stop => 0,
            Action::Go => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Stop => "stop",
            Action::Go => "go",
        }
    }
}
