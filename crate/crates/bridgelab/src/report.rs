//! Deterministic report serialization.
//!
//! Every report embeds the artifact version and a verbatim echo of the run
//! configuration, and formats all floating-point numbers with 17 significant
//! digits in scientific notation, so identical configurations produce
//! byte-identical files.

use crate::error::Result;
use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};
use serde_json::Value;
use std::io::Write;

/// Version string embedded in every report.
pub const ARTIFACT_VERSION: &str = concat!("bridgelab-", env!("CARGO_PKG_VERSION"));

/// Formats `f64` values as `{:.16e}` (17 significant digits) so JSON output
/// is bit-deterministic and round-trips exactly.
struct SciFormatter;

impl Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        CompactFormatter.write_f32(writer, value)
    }
}

/// The configuration echo: ordered key/value pairs, rendered verbatim.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    /// Parameters in declaration order (ordering is part of determinism).
    pub params: Vec<(String, String)>,
}

impl RunConfig {
    pub fn new(subcommand: &str) -> Self {
        RunConfig { subcommand: subcommand.to_string(), params: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }
}

/// Serialize any payload to the standard JSON report envelope
/// {"version": ..., "config": {...}, "data": ...}.
pub fn to_json_report<T: Serialize>(config: &RunConfig, data: &T) -> Result<String> {
    let mut config_obj = serde_json::Map::new();
    config_obj.insert("subcommand".into(), Value::String(config.subcommand.clone()));
    let mut params = serde_json::Map::new();
    for (k, v) in &config.params {
        params.insert(k.clone(), Value::String(v.clone()));
    }
    config_obj.insert("params".into(), Value::Object(params));
    let mut root = serde_json::Map::new();
    root.insert("version".into(), Value::String(ARTIFACT_VERSION.into()));
    root.insert("config".into(), Value::Object(config_obj));
    root.insert(
        "data".into(),
        serde_json::to_value(data).map_err(|e| crate::error::Error::Io(e.into()))?,
    );
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    Value::Object(root)
        .serialize(&mut ser)
        .map_err(|e| crate::error::Error::Io(e.into()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

/// Write a CSV report: `# key=value` comment lines echoing the config, a
/// column header row, then rows of 17-significant-digit numbers.
pub fn write_csv_report<W: Write>(
    mut w: W,
    config: &RunConfig,
    columns: &[&str],
    rows: &[Vec<f64>],
) -> Result<()> {
    writeln!(w, "# version={ARTIFACT_VERSION}")?;
    writeln!(w, "# subcommand={}", config.subcommand)?;
    for (k, v) in &config.params {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "{}", columns.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
