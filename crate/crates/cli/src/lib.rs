//! Front end of the `fixray` command: configuration, SVG output and
//! subcommand dispatch.

pub mod app;
pub mod config;
pub mod svg;
