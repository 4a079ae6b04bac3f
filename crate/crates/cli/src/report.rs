//! Report emission. JSON reports carry a fixed-order envelope whose only
//! run-varying data (the timestamp) lives in the `meta` block, so reports
//! from identical runs agree byte for byte once `meta` is stripped. All
//! files are written to a temporary sibling and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: String,
    pub version: &'static str,
    pub timestamp_unix_s: u64,
    pub seed: Option<u64>,
    pub refine: Option<usize>,
    pub threads: usize,
}

impl Meta {
    pub fn new(command: &str, seed: Option<u64>, refine: Option<usize>, threads: usize) -> Self {
        let timestamp_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Meta {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            timestamp_unix_s,
            seed,
            refine,
            threads,
        }
    }
}

/// One pass/fail criterion of a command. The process exits 0 iff every gate
/// of the run passed.
#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Gate {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Gate {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub meta: &'a Meta,
    pub config: &'a RunConfig,
    pub gates: &'a [Gate],
    pub report: &'a T,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("not a file path: {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::Io(format!("renaming {} into place: {e}", tmp.display()))
    })?;
    Ok(())
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    envelope: &Envelope<'_, T>,
) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut bytes = serde_json::to_vec_pretty(envelope)
        .map_err(|e| CliError::Io(format!("serializing {name}: {e}")))?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    Ok(path)
}

/// Rows are emitted in the iterator's order under a single header line;
/// floats use the shortest round-trip decimal form.
pub fn write_csv(
    dir: &Path,
    name: &str,
    header: &str,
    rows: impl Iterator<Item = String>,
) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut text = String::with_capacity(1 << 16);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("a.csv");
        write_csv(
            dir.path(),
            "nested/a.csv",
            "x,y",
            vec!["1,2".to_string()].into_iter(),
        )
        .unwrap();
        write_csv(
            dir.path(),
            "nested/a.csv",
            "x,y",
            vec!["3,4".to_string()].into_iter(),
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "x,y\n3,4\n");
        let leftovers: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
