//! Configuration, benchmark problems and file formats for the `fastpart` command.

pub mod benchmarks;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
