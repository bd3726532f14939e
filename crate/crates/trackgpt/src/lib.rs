//! File formats, ingestion, pipeline stages and the command-line driver
//! around `trackgpt-core`.

pub mod baseline;
pub mod config;
pub mod error;
pub mod formats;
pub mod geojson;
pub mod ingest;
pub mod pipeline;
pub mod plot;
pub mod protocol;
pub mod report;
pub mod synth;
