//! Command implementations behind the `retro` binary.

pub mod commands;
pub mod serve;
