//! Simulation core for a single-phase, two-leg modular multilevel converter
//! without designed arm inductors.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the converter
//! parameter set, an averaged plant, a per-cell switched plant with
//! phase-shifted square-wave modulation and cell swapping, the predictive
//! controller with its outer voltage loop and circulating-energy compensator,
//! a fixed-step closed-loop engine, and the post-processing used to judge runs.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod math;

pub mod analysis;
pub mod averaged;
pub mod controller;
pub mod engine;
pub mod modulation;
pub mod params;
pub mod rk4;
pub mod steady;
pub mod swap;
pub mod switched;
pub mod trajectory;

pub use num_complex::Complex64;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
