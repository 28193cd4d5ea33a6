//! File formats, benchmark harness and command-line front end for
//! panorama retrieval and geopositioning.

pub mod cli;
pub mod error;
pub mod evalbench;
pub mod features;
pub mod index_file;

pub use error::{Error, Result};
