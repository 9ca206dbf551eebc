use std::fs;
use std::path::{Path, PathBuf};

use ojasub::Result;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// An output directory that records what it writes and emits `manifest.json`.
pub struct Run {
    dir: PathBuf,
    command: String,
    seed: u64,
    inputs: Vec<Value>,
    outputs: Vec<String>,
    config: Value,
}

impl Run {
    pub fn new(dir: &Path, command: String, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: Value::Null,
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.inputs.push(json!({
            "path": path.display().to_string(),
            "sha256": hex::encode(Sha256::digest(&bytes)),
        }));
        Ok(())
    }

    pub fn config(&mut self, config: Value) {
        self.config = config;
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        if let Some(parent) = Path::new(name).parent() {
            fs::create_dir_all(self.dir.join(parent))?;
        }
        fs::write(self.dir.join(name), contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<()> {
        self.write(name, &pretty(value))
    }

    pub fn finish(self) -> Result<()> {
        let manifest = json!({
            "command": self.command,
            "inputs": self.inputs,
            "config": self.config,
            "outputs": self.outputs,
            "versions": format!("ojasub {}", env!("CARGO_PKG_VERSION")),
            "seed": self.seed,
        });
        fs::write(self.dir.join("manifest.json"), pretty(&manifest))?;
        Ok(())
    }
}

pub fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}
