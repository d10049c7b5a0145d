//! IO, file formats, parallel simulation and the command-line pipeline
//! around [`spadqrng_core`].

pub mod bench;
pub mod certify;
pub mod cli;
pub mod error;
pub mod io;
pub mod profile;
pub mod report;
pub mod simulate;

pub use error::{AppError, AppResult};
pub use spadqrng_core as core;
