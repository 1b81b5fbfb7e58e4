//! The `defhyper` command-line tool.

pub mod app;
pub mod fetch;
