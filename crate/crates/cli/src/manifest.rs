//! Run manifests: command, arguments, seed and input digests, written next
//! to the artifacts so any run can be reproduced bit-for-bit.

use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::output::OutDir;

pub struct Manifest {
    command: &'static str,
    seed: u64,
    args: Map<String, Value>,
    inputs: Map<String, Value>,
    outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Self {
            command,
            seed,
            args: Map::new(),
            inputs: Map::new(),
            outputs: Vec::new(),
        }
    }

    pub fn arg<V: Into<Value>>(mut self, key: &str, value: V) -> Self {
        self.args.insert(key.to_string(), value.into());
        self
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("cannot digest input {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs
            .insert(path.display().to_string(), Value::String(hex));
        Ok(self)
    }

    pub fn outputs<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.outputs = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn write(self, out: &OutDir) -> Result<()> {
        let value = serde_json::json!({
            "artifact": "logodds",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "args": self.args,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        out.write_json("manifest.json", &value)?;
        Ok(())
    }
}
