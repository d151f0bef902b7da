//! Toolkit for building paired English/Spanish speech corpora from dubbed
//! media: subtitle parsing, audio slicing and features, transcript and
//! speaker filtering, discrete units, and corpus metrics.
//!
//! The [`pipeline`] module strings the pieces together; every other module
//! is usable on its own.

pub mod adapter;
pub mod audio;
pub mod error;
pub mod filtering;
pub mod fixtures;
pub mod hashing;
pub mod language;
pub mod metrics;
pub mod pipeline;
pub mod speakers;
pub mod subtitle;
pub mod units;

pub use error::{Error, Result};
pub use language::Language;
