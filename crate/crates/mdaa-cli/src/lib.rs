//! Library surface of the harness: configuration, schedule presets, and the
//! init/adapt run loop. The `mdaa` binary is a thin wrapper over these, and
//! the acceptance suite drives them directly.

pub mod commands;
pub mod config;
pub mod presets;
pub mod run;
