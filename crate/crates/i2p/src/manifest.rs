//! Run manifests: command, version, resolved settings, and SHA-256 of every
//! input and output. Lines are `key = value` in insertion order.

use std::path::Path;

use crate::error::Result;
use crate::fsutil::{read, sha256_hex, write_atomic};

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Every line of `cfg_text` under `config.`.
    pub fn config(&mut self, cfg_text: &str) {
        for line in cfg_text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.set(&format!("config.{}", k.trim()), v.trim());
            }
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_hex(&read(path)?);
        self.set(&format!("input.{}", path.display()), digest);
        Ok(())
    }

    pub fn output(&mut self, name: &str, bytes: &[u8]) {
        self.set(&format!("output.{name}"), sha256_hex(bytes));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}
