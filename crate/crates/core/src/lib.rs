//! Single-picker routing for rectangular block warehouses.
//!
//! The crate models a warehouse as parallel pick-aisles joined by a front and
//! a back cross-aisle, and builds picker tours aisle by aisle: each aisle gets
//! a vertical traversal action, each hop to the next non-empty aisle a
//! horizontal cross-aisle action. Partial tours are tracked by a six-state
//! parity/connectivity class, which is what makes exact dynamic programming
//! linear in the number of aisles.
//!
//! On top of that tour machinery sit:
//!
//! * [`exact`] — the optimal solver (DP over parity classes) plus a Held-Karp
//!   TSP oracle used to cross-check it,
//! * [`heuristics`] — s-shape, return, largest-gap and composite policies,
//!   all emitted as action sequences so they are length-audited by the same
//!   environment,
//! * [`policy`] — a masked attention encoder that scores the 16 action pairs
//!   per aisle, built on the small reverse-mode [`tensor`] library,
//! * [`train`] — REINFORCE with a greedy rollout baseline and a paired t-test
//!   gate for baseline updates,
//! * [`eval`] — optimality-gap benchmarking across problem classes.

pub mod eval;
pub mod exact;
pub mod heuristics;
pub mod policy;
pub mod tensor;
pub mod tourgraph;
pub mod train;
pub mod warehouse;

pub use warehouse::{
    AisleEntry, AisleSequence, DistributionMode, GeometrySpec, Instance, Length, Location,
    ProblemClass, WarehouseGeometry,
};

/// Errors surfaced by the routing engine.
#[derive(Debug)]
pub enum Error {
    /// A value lies outside the warehouse geometry or violates a type invariant.
    Domain(String),
    /// An operation was called with arguments that break its contract.
    Contract(String),
    /// An action pair is not applicable in the current tour state.
    InvalidAction {
        step: usize,
        reason: String,
    },
    /// A file has the wrong format, version, or shape.
    Format(String),
    /// Required configuration (e.g. model weights) is missing.
    Config(String),
    Io(std::io::Error),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::InvalidAction { step, reason } => {
                write!(f, "invalid action at step {step}: {reason}")
            }
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
