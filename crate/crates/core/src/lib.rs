//! Geopositioning engine core: memory-vector aggregation, geographic
//! clustering, hierarchical cosine search and re-ranked position estimation.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the synthetic
//! benchmark and the command-line tool live in the `panogeo` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod aggregation;
pub mod error;
pub mod geocluster;
pub mod geoposition;
pub mod index;
mod linalg;
pub mod model;

pub use error::{Error, Result};
