//! Open-domain multi-class sketch-to-photo translation.
//!
//! Two generators, two patch discriminators and a label classifier are
//! trained jointly on unpaired photos and sketches. Classes without any
//! training sketch are reached by mixing pooled synthesized sketches, labelled
//! with their source photo's class, into the photo generator's update.

pub mod archive;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod losses;
pub mod models;
pub mod nn;
pub mod pool;
pub mod trainer;

pub use error::{Error, Result};
