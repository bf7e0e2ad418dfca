//! Library half of the CLI: CSV ingestion, the synthetic dataset
//! generator, run configuration, SVG rendering and the command
//! implementations. The binary in `main.rs` is a thin argument-parsing
//! layer over these modules.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod svg;
pub mod synth;
