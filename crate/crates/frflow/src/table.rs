//! Numeric CSV output.
//!
//! Values are written in scientific notation with 17 significant digits, so
//! every `f64` survives a round trip; values that do not apply are `NaN`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};

pub fn number(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_owned()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{x:.16e}")
    }
}

pub fn optional(x: Option<f64>) -> String {
    x.map_or_else(|| "NaN".to_owned(), number)
}

/// An in-memory CSV document with a fixed header.
#[derive(Debug, Clone)]
pub struct Table {
    columns: usize,
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            columns: header.len(),
            text: header.join(",") + "\n",
        }
    }

    pub fn push(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width must match the header");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            let _ = write!(self.text, "{c}");
        }
        self.text.push('\n');
    }

    pub fn push_numbers(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|v| number(*v)).collect();
        self.push(&cells);
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.text)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_owned(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}
