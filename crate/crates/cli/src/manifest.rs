use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::{sha256_file, FileDigest, OutDir};
use crate::settings::ConfigFile;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub cwd: PathBuf,
    pub config_file: Option<FileDigest>,
    pub parameters: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Collects input digests while a command runs.
pub struct Run {
    pub argv: Vec<String>,
    pub config: ConfigFile,
    inputs: Vec<FileDigest>,
}

impl Run {
    pub fn new(argv: Vec<String>, config: ConfigFile) -> Self {
        Self {
            argv,
            config,
            inputs: Vec::new(),
        }
    }

    /// Registers an input file and returns it unchanged.
    pub fn input<'a>(&mut self, path: &'a Path) -> Result<&'a Path> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(path)
    }

    pub fn finish(self, command: &str, parameters: Value, mut out: OutDir) -> Result<RunManifest> {
        let config_file = match &self.config.path {
            Some(p) => Some(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            }),
            None => None,
        };
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: self.argv,
            cwd: std::env::current_dir()?,
            config_file,
            parameters,
            inputs: self.inputs,
            outputs: out.outputs().to_vec(),
        };
        out.write_json(MANIFEST_NAME, &manifest)?;
        Ok(manifest)
    }
}
