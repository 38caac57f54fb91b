//! Command-line pipeline: `project` → `rates` → `evolve` → `analyze`.
//!
//! Every text output opens with a `# spinphonon <version> config_sha256=…`
//! comment; JSON outputs carry the same information in their `generator`
//! and `config_sha256` fields.

pub mod archive;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod plot;

pub use commands::{cmd_analyze, cmd_evolve, cmd_project, cmd_rates};
pub use error::{CliError, CliResult};
