//! Run directories and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Formats a float with 17 significant digits. Non-finite values are written
/// as Rust prints them (`NaN`, `inf`).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON rendering of [`num`]; non-finite values become `null`.
pub fn json_num(x: f64) -> String {
    if x.is_finite() {
        num(x)
    } else {
        "null".into()
    }
}

/// Minimal ordered JSON object writer so numbers keep 17 significant digits.
#[derive(Default)]
pub struct JsonObject {
    fields: Vec<(String, String)>,
}

impl JsonObject {
    pub fn num(mut self, key: &str, x: f64) -> Self {
        self.fields.push((key.into(), json_num(x)));
        self
    }

    pub fn int(mut self, key: &str, x: usize) -> Self {
        self.fields.push((key.into(), x.to_string()));
        self
    }

    pub fn bool(mut self, key: &str, x: bool) -> Self {
        self.fields.push((key.into(), x.to_string()));
        self
    }

    pub fn str(mut self, key: &str, x: &str) -> Self {
        let quoted = serde_json::to_string(x).expect("string serializes");
        self.fields.push((key.into(), quoted));
        self
    }

    pub fn render(&self) -> String {
        let body: Vec<String> = self
            .fields
            .iter()
            .map(|(k, v)| format!("  \"{k}\": {v}"))
            .collect();
        format!("{{\n{}\n}}\n", body.join(",\n"))
    }
}

/// Builds CSV text from string records.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Solver(cylspectra::Error::Io(e.to_string()));
    writer.write_record(header).map_err(err)?;
    for row in rows {
        writer.write_record(row).map_err(err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Solver(cylspectra::Error::Io(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Creates a fresh `<root>/<prefix>-<stamp>[-n]` directory.
pub fn fresh_run_dir(root: &Path, prefix: &str, stamp: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    for n in 0.. {
        let name = if n == 0 {
            format!("{prefix}-{stamp}")
        } else {
            format!("{prefix}-{stamp}-{n}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(dir, e)),
        }
    }
    unreachable!("directory suffixes exhausted")
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut file = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    file.write_all(contents)
        .map_err(|e| CliError::io(&tmp, e))?;
    file.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, &target).map_err(|e| CliError::io(&target, e))?;
    Ok(target)
}
