//! File formats and subcommands around `labelassign-core`.

pub mod coco;
pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{cmd_assign, cmd_evaluate, cmd_simulate};
pub use config::{RunConfig, StrategyChoice};
