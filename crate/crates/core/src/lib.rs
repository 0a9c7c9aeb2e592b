//! Rydberg-atom RF sensor toolkit.
//!
//! Models the four-level ladder response, synthesises noisy detector
//! readouts for intensity and splitting detection, implements the
//! maximum-likelihood field estimators with their Cramer-Rao bounds, and runs
//! seeded Monte Carlo campaigns that compare detection schemes and sampling
//! strategies.
//!
//! Unit conventions used throughout: RF field strength is carried as the
//! Rabi-equivalent Omega_RF/2pi in MHz (convert with
//! [`AtomicSystem::field_from_rabi_mhz`]); probe frequencies are detunings
//! f_p - f_{p,o} in MHz; variances and bounds are in MHz^2.

pub(crate) mod interp;
pub mod noise_sim;
pub mod crlb;
pub mod estimators;
pub mod harness;
pub mod quantum_model;
pub mod response;

pub use quantum_model::{AtomicSystem, ResponseSurface};
