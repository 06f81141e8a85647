//! Dense CRF mean-field inference for part segmentation, with superpixel,
//! containment and attachment pattern potentials.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod grid;
pub mod inference;
pub mod io;
pub mod oracle;
pub mod potentials;
pub mod relations;
pub mod superpixels;
pub mod synthetic;
pub mod visualize;

pub use error::{Error, Result};
