//! Smartphone passive-sensing phenotyping toolkit: scan-log ingestion, data
//! completeness, social context from Bluetooth, GPS mobility features,
//! battery cost of scanning and the supporting statistics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod completeness;
pub mod error;
pub mod ingest;
pub mod mobility;
pub mod model;
pub mod social;
pub mod report;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
