//! JSONL helpers with line-accurate error reporting.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::io::{BufRead, Write};

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Serialize(serde_json::Error),
}

/// Parse every non-empty line of `text`. Errors carry 1-based line numbers.
pub fn parse_str<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, JsonlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| JsonlError::Parse { line: i + 1, source }))
        .collect()
}

pub fn read<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| JsonlError::Parse { line: i + 1, source })?,
        );
    }
    Ok(out)
}

/// Serialize one item per line. Struct field order makes the output canonical.
pub fn write<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<(), JsonlError> {
    for item in items {
        let line = serde_json::to_string(item).map_err(JsonlError::Serialize)?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_string<T: Serialize>(items: &[T]) -> Result<String, JsonlError> {
    let mut buf = Vec::new();
    write(&mut buf, items)?;
    Ok(String::from_utf8(buf).expect("serde_json output is UTF-8"))
}
