//! Shared pieces of the `maxsat` command-line tool.

pub mod checks;
