//! Offline design toolkit for decentralized Volt-VAr Control (VVC) on radial
//! distribution feeders.
//!
//! The crate covers the full design workflow:
//!
//! - [`network`] — per-unit feeder model with spanning-tree validation
//! - [`powerflow`] — nonlinear AC power flow by backward-forward sweep
//! - [`linmodels`] — data-driven linearized power flow (finite-difference
//!   Jacobians around a historical operating point) and the impedance-only
//!   LinDistFlow comparison model
//! - [`stability`] — spectral-radius, 2-norm, and Hölder 1/∞-norm criteria
//!   for the closed-loop gain matrix
//! - [`design`] — constrained non-convex optimization of per-inverter slopes
//! - [`simloop`] — closed-loop simulation against the nonlinear power flow,
//!   with divergence detection and deviation metrics
//! - [`scenario`] — loading-condition data sets: train/test splits, operating
//!   points, worst-case and exemplary-hour selection, synthetic years
//!
//! The crate is `no_std` (with `alloc`); file formats, CLI, and parallel
//! drivers live in the companion `vvc-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cases;
pub mod design;
pub mod linmodels;
mod math;
pub mod network;
pub mod powerflow;
pub mod scenario;
pub mod simloop;
pub mod stability;

pub use design::{DesignProblem, DesignResult};
pub use linmodels::{LdfModel, LinearPlant, LpfModel, ScenarioOffset};
pub use network::{NetworkModel, NodeRole};
pub use powerflow::{Injection, PfConfig, VoltageProfile};
pub use scenario::{Scenario, ScenarioSet};
pub use simloop::{ClosedLoopTrace, LoopConfig, LoopOutcome};
pub use stability::{Criterion, GainVector, StabilityVerdict};
