//! Configuration, file formats and subcommands of the `trafficrecon` driver.

pub mod commands;
pub mod config;
pub mod io;

pub use config::RunConfig;
