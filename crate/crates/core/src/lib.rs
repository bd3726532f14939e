//! Trajectory forecasting over geohash tokens.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; IO, file formats and the command line live in the `trackgpt`
//! companion crate. Enable the default `std` feature for runtime SIMD
//! detection in the matrix kernels.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod geocodec;
pub mod gpt;
pub mod metrics;
pub mod regulator;
pub mod trackprep;

pub use error::{CodecError, GptError, MetricsError, PrepError, RegulatorError};
pub use geocodec::{CellBBox, CellId, CodecConfig, GeoPoint, TokenId};
