//! Report rendering. JSON is pretty-printed; CSV flattens either an array
//! of flat objects (one row each) or a single object (one row, nested
//! values embedded as JSON text).

use std::io::Write;

use serde_json::Value;

use crate::config::Format;
use crate::error::CliError;

pub fn render(report: &Value, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report)
                .map_err(|e| CliError::numerical(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => to_csv(report),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn to_csv(report: &Value) -> Result<String, CliError> {
    let rows: Vec<&serde_json::Map<String, Value>> = match report {
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_object()
                    .ok_or_else(|| CliError::validation("rows must be objects"))
            })
            .collect::<Result<_, _>>()?,
        Value::Object(m) => vec![m],
        _ => return Err(CliError::validation("report cannot be written as CSV")),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        w.write_record(first.keys()).map_err(csv_err)?;
        for row in &rows {
            w.write_record(
                first
                    .keys()
                    .map(|k| row.get(k).map(cell).unwrap_or_default()),
            )
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::io(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::io(e.to_string())
}

pub fn write_text(path: &std::path::Path, text: &str) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}
