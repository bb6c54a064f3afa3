//! Config-file merging, error taxonomy and CSV output shared by all subcommands.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use decspray::FieldSpec;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every failure maps to one process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Invalid flags or inputs: exit 2.
    Usage(String),
    /// Unreadable packet or packets that disagree on k, n or field: exit 3.
    Header(String),
    /// The selected packets do not determine the data: exit 4.
    Singular {
        rank: Option<usize>,
        k: usize,
    },
    /// Decoded data contradicts a packet: exit 5.
    Inconsistent(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Header(_) => 3,
            Failure::Singular { .. } => 4,
            Failure::Inconsistent(_) => 5,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Header(m) => f.write_str(m),
            Failure::Singular { rank: Some(r), k } => write!(f, "singular system: rank {r} < k = {k}"),
            Failure::Singular { rank: None, k } => {
                write!(
                    f,
                    "singular system: rank < k = {k} (rerun with --solver gauss for the exact rank)"
                )
            }
            Failure::Inconsistent(m) => write!(f, "inconsistent system: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

pub fn usage(e: impl fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

/// Reads the `--config` file, which must hold a JSON object.
pub fn load(path: Option<&Path>) -> Result<Option<Value>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !value.is_object() {
        return Err(Failure::Usage(format!(
            "config {} must be a JSON object",
            path.display()
        )));
    }
    Ok(Some(value))
}

/// Overlays the flags the user actually passed onto the config file.
/// Absent options, `false` switches and empty lists count as not passed.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Value>) -> Result<T, Failure> {
    let Some(file) = file else {
        return Ok(
            serde_json::from_value(serde_json::to_value(flags).map_err(anyhow::Error::from)?)
                .map_err(anyhow::Error::from)?,
        );
    };
    let mut merged = file.as_object().cloned().unwrap_or_default();
    let Value::Object(given) = serde_json::to_value(flags).map_err(anyhow::Error::from)? else {
        unreachable!("argument structs serialize to objects");
    };
    for (key, value) in given {
        let unset = match &value {
            Value::Null | Value::Bool(false) => true,
            Value::Array(a) => a.is_empty(),
            _ => false,
        };
        if !unset || !merged.contains_key(&key) {
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Failure::Usage(format!("config: {e}")))
}

pub fn parse_field(name: Option<&str>, default: FieldSpec) -> Result<FieldSpec, Failure> {
    match name {
        None => Ok(default),
        Some(s) => s.parse().map_err(usage),
    }
}

pub fn require<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Usage(format!("missing required value --{flag}")))
}

/// A CSV document preceded by `#` lines carrying the tool version and the
/// fully resolved configuration.
pub fn csv_document<C: Serialize>(
    command: &str,
    resolved: &C,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<Vec<u8>, Failure> {
    let mut out = Vec::new();
    writeln!(out, "# decspray {VERSION} {command}")?;
    writeln!(
        out,
        "# config {}",
        serde_json::to_string(resolved).map_err(anyhow::Error::from)?
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(anyhow::Error::from)?;
    for row in rows {
        w.write_record(row).map_err(anyhow::Error::from)?;
    }
    w.into_inner().map_err(|e| Failure::Other(anyhow::anyhow!("{e}")))
}

/// Writes to `out`, or stdout when no path is given.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| Failure::Other(anyhow::anyhow!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}
