//! Run directory handling: CSV and JSON writers and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use hedgenet_core::format::fmt_f64;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";

/// SHA-256 of the compact canonical (key-sorted) JSON form.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(&cfg.canonical()).expect("configuration serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A CSV table built in memory and written in one go.
pub struct Csv {
    text: String,
}

pub enum Cell<'a> {
    Num(f64),
    Int(u64),
    Str(&'a str),
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::Num(v) => self.text.push_str(&fmt_f64(*v)),
                Cell::Int(v) => write!(self.text, "{v}").unwrap(),
                Cell::Str(s) => self.text.push_str(s),
            }
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Collects the files of one run and writes the manifest last.
pub struct RunDir {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
    timing: bool,
}

impl RunDir {
    pub fn create(dir: &Path, timing: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
            timing,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Milliseconds since `since`, or 0 when timing is disabled.
    pub fn elapsed_ms(&self, since: Instant) -> u64 {
        if self.timing {
            since.elapsed().as_millis() as u64
        } else {
            0
        }
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<()> {
        self.write(name, &format!("{}\n", serde_json::to_string(value)?))
    }

    pub fn finish(self, command: &str, cfg: &ExperimentConfig) -> Result<PathBuf> {
        let wall_ms = self.elapsed_ms(self.started);
        let manifest = json!({
            "tool": "hedgenet",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config_hash": config_hash(cfg),
            "config": cfg.canonical(),
            "wall_ms": wall_ms,
            "files": self.files,
        });
        let path = self.dir.join(MANIFEST);
        std::fs::write(
            &path,
            format!("{}\n", serde_json::to_string_pretty(&manifest)?),
        )
        .with_context(|| format!("writing {}", path.display()))?;
        Ok(self.dir)
    }
}

/// JSON number, or null for non-finite values.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}
