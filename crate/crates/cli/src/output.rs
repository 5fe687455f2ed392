use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rcpo::RcpoError;
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or parameters: exit 2.
    Usage(String),
    /// Unreadable or malformed input: exit 3.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<RcpoError> for CliError {
    fn from(e: RcpoError) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

/// Attaches the path to an I/O or parse failure.
pub fn with_path<T>(r: rcpo::Result<T>, path: &Path) -> Result<T, CliError> {
    r.map_err(|e| match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable report"));
}

/// Parses a comma-separated list such as `0.5,-1,2`.
pub fn parse_list<T: FromStr>(flag: &str, raw: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    raw.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|e| CliError::Usage(format!("{flag}: cannot parse {part:?}: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mnl,
    Rmj,
}
