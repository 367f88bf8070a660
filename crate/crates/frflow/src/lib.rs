//! Experiments on Fisher-Rao gradient flows of linear programs and
//! state-action natural policy gradients: instance files, CSV and SVG
//! output, and the command implementations behind the `frflow` binary.

pub mod error;
pub mod game;
pub mod instance;
pub mod manifest;
pub mod rates;
pub mod repro;
pub mod svg;
pub mod table;
pub mod trajectory;

pub use error::{CliError, Result};
