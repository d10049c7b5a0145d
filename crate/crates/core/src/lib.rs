//! Core algorithms for a software twin of an integrated SPAD-array quantum
//! random number generator.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, threads or the clock lives in the `spadqrng` companion crate.
//!
//! Modules:
//!
//! - [`bits`]: bit containers shared by everything else (frames, streams,
//!   GF(2) matrices) and their byte/text encodings.
//! - [`source`]: Monte Carlo model of the photon source and detector array.
//! - [`entropy`]: conditional min-entropy of the raw output and extractor
//!   sizing through the leftover hash lemma.
//! - [`extract`]: streaming vector-matrix extraction over GF(2).
//! - [`stats`]: statistical test battery and correlation estimators.

#![no_std]
#![deny(missing_debug_implementations)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod bits;
pub mod entropy;
mod error;
pub mod extract;
pub mod rng;
pub mod source;
pub mod special;
pub mod stats;

pub use bits::{hamming_weight, BinaryMatrix, BitFrame, BitStream};
pub use error::{Error, Result};
