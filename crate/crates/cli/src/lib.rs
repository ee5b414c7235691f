//! Command-line front end for `hall-edge`: configuration, dispatch and
//! report writing.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{dispatch, MissingModel, COMMANDS};
pub use config::RunConfig;
pub use report::{Check, RunReport};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "HALL_EDGE_THREADS";
