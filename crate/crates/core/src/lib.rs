//! Nonmonotone subgradient methods for minimizing upper-C² functions.
//!
//! The crate provides two drivers sharing one nonmonotone Armijo linesearch:
//!
//! * [`nsm::run_nsm`], the generic method where the initial trial stepsize and
//!   the memory parameter come from user-supplied schedules;
//! * [`snsm::run_snsm`], the self-adaptive variant that grows the trial
//!   stepsize after consecutive clean acceptances and picks the smallest
//!   memory that certifies the last step.
//!
//! Two problem backends are included: minimum sum-of-squares clustering
//! ([`mssc`]) and nonconvex quadratic programming over a union of balls
//! centred on an integer grid, attacked through its forward-backward envelope
//! ([`fbe_qp`]). [`verify`] re-checks the descent laws on a recorded trace and
//! [`campaign`] runs seeded multi-start experiments.

pub mod campaign;
pub mod error;
pub mod fbe_qp;
pub mod linesearch;
pub mod mssc;
pub mod nsm;
pub mod oracle;
pub mod params;
pub mod snsm;
pub mod stopping;
pub mod trace;
pub mod vector;
pub mod verify;

pub use error::{Error, Result};
pub use oracle::{DirectionStrategy, Objective, Steepest};
pub use params::SolverParams;
pub use trace::{RunResult, Termination, TraceRecord};

/// Coordinates of an iterate. For clustering, centroid `t` occupies
/// `coords[t * s..(t + 1) * s]`.
pub type Point = Vec<f64>;
