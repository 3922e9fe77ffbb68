//! Library side of the `hdr-fringe` command: configuration, stage
//! functions and comparison metrics.

pub mod compare;
pub mod config;
pub mod error;
pub mod stages;

pub use compare::{compare_maps, CompareOptions, Comparison};
pub use config::{Level, PipelineConfig};
pub use error::CliError;
pub use stages::{
    cmd_compare, cmd_fuse, cmd_match, cmd_phase, cmd_pipeline, cmd_reconstruct, cmd_simulate,
};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
