//! Batch front end for the `gem-xpm` simulators: TOML configs in, CSV
//! tables and a JSON summary out.

pub mod app;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod presets;

pub use app::{run_cli, simulate, Options};
pub use config::ExperimentConfig;
pub use error::CliError;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
struct BookCli;
