//! File formats, experiment runner and command-line front end on top of
//! [`aucns_core`].

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod probe;
pub mod splits;

pub use aucns_core as core;
pub use error::{Error, Result};
