//! Optional TOML configuration.
//!
//! Each subcommand reads the table of the same name, keys spelled like the
//! long flags (`n-boot` or `n_boot`). A flag given on the command line always
//! wins over the file; the built-in default applies when neither is set.
//!
//! ```toml
//! [score]
//! n-boot = 2000
//! alpha = 0.01
//! ```

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

pub fn load(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn unset(v: &Value) -> bool {
    match v {
        Value::Null | Value::Bool(false) => true,
        Value::Array(a) => a.is_empty(),
        _ => false,
    }
}

/// Fills every field the command line left unset from `section`.
pub fn merge<T: Serialize + DeserializeOwned>(flags: T, section: Option<&toml::Value>, command: &str) -> Result<T> {
    let Some(section) = section else { return Ok(flags) };
    let table = section
        .as_table()
        .ok_or_else(|| CliError::Config(format!("[{command}] must be a table")))?;
    let Value::Object(mut fields) = serde_json::to_value(&flags).expect("flags serialise") else {
        unreachable!("argument structs serialise to objects")
    };
    for (key, value) in table {
        let key = key.replace('-', "_");
        let slot = fields
            .get_mut(&key)
            .ok_or_else(|| CliError::Config(format!("[{command}]: unknown key {key:?}")))?;
        if unset(slot) {
            *slot = serde_json::to_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        }
    }
    serde_json::from_value(Value::Object(fields)).map_err(|e| CliError::Config(format!("[{command}]: {e}")))
}
