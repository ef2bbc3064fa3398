//! End-to-end pipeline: configuration, stages, artifacts, rendering and the
//! ablation harness behind the `cd-kcdm` command line.

pub mod ablate;
pub mod artifacts;
pub mod cli;
pub mod config;
pub mod render;
pub mod stages;
