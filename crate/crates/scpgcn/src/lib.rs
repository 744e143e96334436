//! File formats, parallel experiment drivers and the command-line interface
//! around `scpgcn-core`.

pub mod cli;
pub mod dataio;
pub mod report;
pub mod runner;
