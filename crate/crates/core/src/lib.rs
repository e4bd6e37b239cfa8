//! Group-invariant speech segment signatures.
//!
//! The pipeline turns raw mono audio into frame-level acoustic features
//! ([`frontend`]), aggregates labelled phone segments into fixed-length
//! vectors ([`segment`]), partitions a held-out template pool into orbit
//! sets ([`orbit`]), projects inputs onto every stored template and pools
//! the projections into per-set distribution estimates ([`signature`]),
//! and classifies the concatenated signatures with one-vs-all regularized
//! least squares ([`rls`]). A deterministic synthetic vowel corpus
//! ([`synth`], [`corpus`]) makes the whole chain runnable without any
//! licensed speech data, and [`pipeline`] orchestrates end-to-end
//! experiments including the training-set-size sweep.

pub mod audio;
pub mod config;
pub mod corpus;
pub mod frontend;
pub mod linalg;
pub mod orbit;
pub mod pipeline;
pub mod rls;
pub mod segment;
pub mod signature;
pub mod synth;
pub mod util;

mod error;

pub use error::Error;

/// Convenient result alias for fallible operations across the crate.
pub type Result<T> = std::result::Result<T, Error>;
