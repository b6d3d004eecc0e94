//! Configuration and unit handling for the `sdbp-sim` command-line tool.

pub mod config;
pub mod units;
