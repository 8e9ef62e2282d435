//! Nonsubsampled graph filter banks: analysis and synthesis design,
//! an agent-based distributed reconstruction solver, and a denoising
//! pipeline over random geometric and edge-list graphs.

pub mod error;
pub mod graph;
pub mod sparse;
pub mod spectral;

pub mod distributed;
pub mod filterbank;
pub mod io;
pub mod pipeline;
pub mod synthesis;

pub use error::{Error, Result};
