//! Simulation core for a 3D-stacked MoE serving accelerator.
//!
//! Everything here is `no_std` with `alloc`; file formats and the command
//! line live in the companion crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

mod error;

pub mod codec;
pub mod engine;
pub mod hardware;
pub mod memory;
pub mod rng;
pub mod scheduler;
pub mod systolic;
pub mod workload;

pub use error::{Error, Result};
