//! Library surface of the `staq` command-line tool: configuration loading,
//! experiment orchestration, and CSV/SVG output writers. The binary in
//! `main.rs` is a thin argument-parsing shell over this crate so the
//! integration tests can drive everything in-process.

pub mod config;
pub mod csvout;
pub mod experiment;
pub mod svg;
