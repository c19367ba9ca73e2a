//! Run manifests: enough to rerun a command exactly.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = concat!("lrwi ", env!("CARGO_PKG_VERSION"));

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Extra `key = value` lines, in insertion order.
    pub extra: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, config_text: &str, seed: u64) -> Self {
        Self { command: command.to_string(), config_sha256: sha256_hex(config_text.as_bytes()), seed, extra: Vec::new() }
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.extra.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "command = {}\nconfig_sha256 = {}\nversion = {}\nseed = {}\n",
            self.command, self.config_sha256, VERSION, self.seed
        );
        for (k, v) in &self.extra {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join("manifest.txt");
        std::fs::write(&path, self.render()).map_err(|e| CliError::io(path, e))
    }
}
