//! Config parsing and CSV emission for the `mwsmpc` binary, exposed as a
//! library so integration suites can drive the same code paths.

pub mod config;
pub mod output;
