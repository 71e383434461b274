use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub args: Vec<String>,
    /// Effective configuration after flags, config file and defaults.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// Input path (or generated-data tag) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output path to SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Content hash of the weight archive the run produced, if any.
    pub weights_hash: Option<String>,
    pub wall_clock_s: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            args: std::env::args().skip(1).collect(),
            config: serde_json::Value::Null,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            weights_hash: None,
            wall_clock_s: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn config(&mut self, value: &impl Serialize) {
        self.config = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let h = hash_path(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn input_tag(&mut self, tag: &str) {
        self.inputs.insert(tag.into(), hex(&Sha256::digest(tag.as_bytes())));
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        let h = hash_path(path)?;
        self.outputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn finish(mut self, out_dir: &Path) -> CliResult<PathBuf> {
        if let Some(t) = self.started {
            self.wall_clock_s = t.elapsed().as_secs_f64();
        }
        let path = out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Runtime(e.to_string()))?;
        graspkit::nn::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// SHA-256 of a file, or of every file under a directory (relative paths
/// and contents, in sorted order).
pub fn hash_path(path: &Path) -> CliResult<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0u8]);
            h.update(std::fs::read(&f).map_err(|e| io_err(&f, e))?);
        }
    } else {
        h.update(std::fs::read(path).map_err(|e| io_err(path, e))?);
    }
    Ok(hex(&h.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let p = entry.map_err(|e| io_err(dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}
