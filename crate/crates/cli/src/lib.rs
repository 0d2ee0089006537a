//! Library surface of the `dexflow` binary: configuration, the toy world
//! used for synthesis and closed-loop evaluation, and the subcommand
//! implementations.

pub mod commands;
pub mod config;
pub mod world;
