//! Simulation and estimation toolkit for interleaved gate benchmarking with
//! simultaneous single-qubit reference sequences.
//!
//! The crate covers the whole chain: Clifford group tables, exact
//! density-matrix simulation under local depolarizing noise, the
//! cross-entropy least-squares estimator, analytic decay laws with
//! nonlinear fitting, outcome-probability distributions, and the protocol
//! runner that ties them into complete experiments.
//!
//! Estimation and analytic code is generic over [`Scalar`] (`f32`/`f64`);
//! the aliases at the crate root fix the `f64` and `f32` instantiations.
//! Clifford step distributions use exact rational weights ([`StepWeight`]).

pub mod clifford;
pub mod decay;
pub mod distributions;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod simulator;
pub mod study;
pub mod xeb;

pub use clifford::{CliffordGroup, UnitaryMatrix, C64};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CircuitRecord64 = xeb::CircuitRecord<f64>;
pub type CircuitRecord32 = xeb::CircuitRecord<f32>;
pub type FidelityPoint64 = xeb::FidelityPoint<f64>;
pub type FidelityPoint32 = xeb::FidelityPoint<f32>;
pub type DecayFit64 = fit::DecayFit<f64>;
pub type DecayFit32 = fit::DecayFit<f32>;
pub type DepolarizingParams64 = decay::DepolarizingParams<f64>;
pub type DepolarizingParams32 = decay::DepolarizingParams<f32>;
/// Exact weights and values of Clifford output-probability distributions.
pub type StepWeight = num_rational::Ratio<u64>;
