//! Shell, batch runner and configuration for the semsql engine.

pub mod config;
pub mod fixturegen;
pub mod shell;
