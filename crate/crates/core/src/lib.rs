#![no_std]

extern crate alloc;

pub mod aucns;
pub mod dataset;
pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod probes;
pub mod rng;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
