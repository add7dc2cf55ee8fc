use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Network construction or lookup failure.
    Network(String),
    /// A movement's interior polyline has zero length.
    DegeneratePath { movement: usize },
    /// No drivable route between the two edges.
    NoRoute { from: usize, to: usize },
    /// A configuration value is out of its admissible range.
    Config(String),
    /// The longitudinal model was asked for a non-positive gap.
    Collision { vehicle: u64, gap: f64, time: f64 },
    /// Learned weights became non-finite.
    Diverged { iteration: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Network(msg) => write!(f, "network error: {msg}"),
            Error::DegeneratePath { movement } => {
                write!(f, "movement {movement} has a zero-length interior path")
            }
            Error::NoRoute { from, to } => write!(f, "no route from edge {from} to edge {to}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Collision { vehicle, gap, time } => {
                write!(f, "vehicle {vehicle} has gap {gap:.3} m to its leader at t={time}")
            }
            Error::Diverged { iteration } => {
                write!(f, "value weights became non-finite at iteration {iteration}")
            }
        }
    }
}

impl core::error::Error for Error {}
