use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))
}

/// Parses one JSON value per non-blank line. Each item carries its 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<(usize, T)>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map(|v| (i + 1, v))
                .map_err(|e| CliError::parse(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Creates `path` and hands a buffered writer to `body`, flushing at the end.
pub fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::internal(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    write_file(path, |w| {
        for row in rows {
            serde_json::to_writer(&mut *w, row).map_err(|e| CliError::internal(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| CliError::internal(e.to_string()))?;
        }
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| CliError::internal(e.to_string()))
    })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_file(path, |w| w.write_all(text.as_bytes()).map_err(|e| CliError::internal(e.to_string())))
}
