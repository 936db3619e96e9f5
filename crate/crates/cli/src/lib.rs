//! Experiment orchestration: configuration, synthetic capture generation,
//! the staged pipeline (ingest, clean, featurize, split, train, eval,
//! report) and report rendering.
//!
//! Every stage persists its artifacts under the output directory so the CLI
//! subcommands compose as separate invocations, and a rerun with equal
//! config and inputs reproduces byte-identical metrics files.

pub mod config;
pub mod report;
pub mod stages;
pub mod synth;
