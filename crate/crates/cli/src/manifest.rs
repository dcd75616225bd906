//! Run manifests: every artifact directory gets a `run_manifest.json`
//! recording the subcommand, the full configuration, the seeds, input
//! file digests, and the tool version. Written before any output
//! artifact; reruns with identical inputs produce identical manifests.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "run_manifest.json";

pub struct Manifest {
    pub subcommand: &'static str,
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl Manifest {
    pub fn new(subcommand: &'static str) -> Self {
        Manifest { subcommand, config: BTreeMap::new(), inputs: BTreeMap::new() }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_hex(path)?);
        Ok(())
    }

    fn render(&self) -> String {
        // BTreeMaps keep key order stable, so the output is byte-identical
        // across reruns.
        let body = serde_json::json!({
            "subcommand": self.subcommand,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "inputs": self.inputs,
        });
        serde_json::to_string_pretty(&body).expect("manifest serialization")
    }

    /// Write into `dir` (created if missing). Call before writing any
    /// other artifact there.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, self.render() + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// Read back a manifest's config map (for stages that chain on an earlier
/// stage's output directory).
pub fn read_config(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(MANIFEST_NAME);
    let raw = std::fs::read_to_string(&path)
        .with_context(|| format!("no manifest at {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&raw)?;
    let mut out = BTreeMap::new();
    if let Some(map) = value.get("config").and_then(|c| c.as_object()) {
        for (k, v) in map {
            if let Some(s) = v.as_str() {
                out.insert(k.clone(), s.to_string());
            }
        }
    }
    Ok(out)
}
