//! Command-line plumbing for `fractal-spectra`: configuration, command
//! dispatch, CSV/JSON output with a hashed manifest, and SVG plots.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;
pub mod threads;

pub use commands::{run_command, Command};
pub use config::{parse_config, parse_config_str, FitWindow, Param, PlotKind, RunConfig};
pub use error::{CliError, ErrorKind};
pub use output::RunManifest;
pub use svg::{render_svg, SvgKind, SvgSeries};
