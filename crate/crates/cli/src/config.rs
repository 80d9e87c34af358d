//! Config-file loading and flag/file/default resolution.
//!
//! Every parameter of every subcommand can come from a flat `key=value`
//! config file (`--config FILE`); keys are the long flag names without
//! the leading dashes. Flags always win over the file, the file wins
//! over built-in defaults. Blank lines and `#` comments are ignored.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Failures split by exit code: usage problems exit 1, data problems 2.
#[derive(Debug)]
pub enum CliError {
    /// Wrong invocation: missing or malformed parameters.
    Usage(String),
    /// Trouble with the data itself: unreadable files, corrupt content,
    /// or a pipeline failure.
    Data(String),
}

impl CliError {
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

/// Key-value pairs from the config file, if one was given.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    /// Loads the file when a path is present. A missing or unreadable
    /// file is a data error; a line without `=` is a usage error.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut values = HashMap::new();
        for (number, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}: line {}: expected key=value, got {line:?}",
                    path.display(),
                    number + 1
                )));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Raw string value of a key, if present.
    #[must_use]
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parsed value of a key; a value that fails to parse is a usage
    /// error naming the key.
    pub fn get_parsed<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                CliError::Usage(format!("config key {key}: invalid value {raw:?}: {e}"))
            }),
        }
    }
}

/// Flag value if given, else config-file value, else the default.
pub fn resolve<T>(flag: Option<T>, file: &FileConfig, key: &str, default: T) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(file.get_parsed(key)?.unwrap_or(default)),
    }
}

/// Like [`resolve`], but the parameter has no default and must come from
/// the flag or the file.
pub fn resolve_required<T>(flag: Option<T>, file: &FileConfig, key: &str) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => file.get_parsed(key)?.ok_or_else(|| {
            CliError::Usage(format!("missing --{key} (or {key}= in the config file)"))
        }),
    }
}
