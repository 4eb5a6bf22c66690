// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! CSV tables, run manifests and atomic file writes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use atomtronics::devices::DeviceSpec;
use serde::Serialize;

use crate::config::RunConfig;

/// Scientific notation with 12 significant digits; empty for `NaN`.
pub fn number(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.11e}")
    }
}

/// Write via a temporary file in the target directory and rename it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path.file_name().ok_or_else(|| io::Error::other("output path has no file name"))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().context("flushing CSV buffer")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?).with_context(|| format!("writing {}", path.display()))
    }
}

/// `<prefix><suffix>` as a path, e.g. `out/diode` + `.csv`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Serialize)]
pub struct Manifest<D: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Effective configuration; re-running it reproduces the outputs.
    pub config: RunConfig,
    pub device: DeviceSpec,
    pub basis_dim: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub status: String,
    pub diagnostics: D,
}

impl<D: Serialize> Manifest<D> {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
    }
}
