//! IO, configuration, synthetic fixtures and the pipeline driver around
//! `adagrid-core`.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod mapfile;
pub mod pipeline;
pub mod ply;
pub mod synth;

pub use adagrid_core as core;
pub use error::{Error, Result};
