use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One labelled image: `false` = real/natural, `true` = generated/smoothed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: bool,
}

impl ManifestEntry {
    pub fn new(path: impl Into<PathBuf>, label: bool) -> Self {
        Self {
            path: path.into(),
            label,
        }
    }

    /// Resolves a relative path against the manifest's directory.
    pub fn resolve(&self, base: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        }
    }
}

fn parse_label(field: &str) -> Option<bool> {
    match field.trim() {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Reads `<path>,<label>` rows. A first row whose label column is `label` is a header.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

pub fn parse_manifest(text: &str, origin: &Path) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let record = record.map_err(|e| {
            let line = e.position().map_or(i + 1, |p| p.line() as usize);
            line_err(line, e.to_string())
        })?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(line_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        if i == 0 && record[1].trim().eq_ignore_ascii_case("label") {
            continue;
        }
        let p = record[0].trim();
        if p.is_empty() {
            return Err(line_err(line, "empty path".into()));
        }
        let label = parse_label(&record[1])
            .ok_or_else(|| line_err(line, format!("label must be 0 or 1, got `{}`", &record[1])))?;
        entries.push(ManifestEntry::new(p, label));
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(err) => Error::io(path, err),
        other => Error::Contract(format!("csv error: {other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["path", "label"]).map_err(io)?;
    for e in entries {
        let p = e.path.to_string_lossy();
        w.write_record([p.as_ref(), if e.label { "1" } else { "0" }])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
