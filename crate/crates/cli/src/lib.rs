//! Command-line front end: world files, label export, detection runs,
//! evaluation and overlays.

pub mod commands;
pub mod config;
pub mod graph_io;
pub mod raster_io;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const TRUNCATED: u8 = 3;
}
