//! File formats and command plumbing around the core toolkit: strict CSV
//! ingestion, canonical JSON reports, SVG plot emission, and the `gapdyn`
//! command-line interface.

pub mod cli;
pub mod error;
pub mod noise;
pub mod plot;
pub mod report;
pub mod tabular;
