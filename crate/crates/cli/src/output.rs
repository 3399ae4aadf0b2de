//! File emission for one run directory.
//!
//! All files go through a single [`RunWriter`], which records the size and
//! SHA-256 of everything written so the manifest can list it. Nothing written
//! here depends on wall-clock time, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Float text used in every CSV and data file: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Like [`fmt_f64`], with `NA` for a missing value.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_f64)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

pub struct RunWriter {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.into(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes a manifest that lists every file written so far. The manifest
    /// itself is not listed.
    pub fn finish<T: Serialize>(self, manifest_name: &str, body: &T) -> Result<Vec<FileEntry>> {
        let mut value = serde_json::to_value(body)?;
        let files = self.files.clone();
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("files".into(), serde_json::to_value(&files)?);
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        let path = self.dir.join(manifest_name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(files)
    }
}

/// Builds CSV text with a fixed header.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// Two-column whitespace-separated series for plotting tools.
pub fn series_dat(label: &str, xs: &[f64], ys: &[f64]) -> Vec<u8> {
    let mut s = format!("# {label}\n");
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(s, "{} {}", fmt_f64(*x), fmt_f64(*y));
    }
    s.into_bytes()
}
