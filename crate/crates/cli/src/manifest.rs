//! Run manifests: what a command read, wrote and was configured with.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started: String,
    pub finished: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Input path (as configured) to sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Effective configuration, as TOML text.
    pub config: String,
    /// Hash of everything above; stable across reruns.
    pub manifest_hash: String,
    pub timestamps: Timestamps,
}

pub fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Collects inputs and outputs while a command runs.
#[derive(Clone, Debug)]
pub struct ManifestBuilder {
    command: String,
    seed: u64,
    config: String,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: String,
}

#[derive(Serialize)]
struct HashedPart<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
    config: &'a str,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, config_toml: String) -> Self {
        ManifestBuilder {
            command: command.to_owned(),
            seed,
            config: config_toml,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: now(),
        }
    }

    /// Records an input under its configured name; `path` is where it was
    /// actually read from.
    pub fn input(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(name.to_owned(), file_hash(path)?);
        Ok(())
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_owned());
    }

    /// Excludes timestamps so reruns produce the same hash.
    pub fn hash(&self) -> String {
        let part = HashedPart {
            command: &self.command,
            version: TOOL_VERSION,
            seed: self.seed,
            inputs: &self.inputs,
            outputs: &self.outputs,
            config: &self.config,
        };
        let text = toml::to_string(&part).expect("manifest serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn finish(self) -> RunManifest {
        let manifest_hash = self.hash();
        RunManifest {
            command: self.command,
            version: TOOL_VERSION.to_owned(),
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            config: self.config,
            manifest_hash,
            timestamps: Timestamps {
                started: self.started,
                finished: now(),
            },
        }
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<RunManifest, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
