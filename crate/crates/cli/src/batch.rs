use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use provision::{GeneratorParams, Instance};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scenario::Grid;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub grid_point: usize,
    pub replicate: usize,
    pub params: GeneratorParams,
    pub sha256: String,
}

/// Written next to generated instances.
#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BatchManifest {
    pub scenario: String,
    pub seed: u64,
    pub replicates: usize,
    pub grid: Grid,
    pub instances: Vec<ManifestEntry>,
}

pub struct Entry {
    pub id: String,
    pub inst: Instance,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical serialization, independent of file formatting.
pub fn instance_hash(inst: &Instance) -> String {
    sha256_hex(inst.to_json().as_bytes())
}

fn load_instance(path: &Path) -> Result<Entry> {
    let inst = Instance::load(path).with_context(|| format!("loading instance {}", path.display()))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Entry { sha256: instance_hash(&inst), id, inst })
}

fn load_manifest(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: BatchManifest = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    m.instances
        .iter()
        .map(|e| {
            let mut entry = load_instance(&dir.join(&e.file))?;
            anyhow::ensure!(entry.sha256 == e.sha256, "instance {} does not match its manifest hash", e.file);
            entry.id = e.id.clone();
            Ok(entry)
        })
        .collect()
}

/// Accepts instance files, manifests, or directories holding a manifest.
pub fn load_inputs(paths: &[PathBuf]) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(load_manifest(&p.join(MANIFEST))?);
        } else if p.file_name().is_some_and(|n| n == MANIFEST) {
            out.extend(load_manifest(p)?);
        } else {
            out.push(load_instance(p)?);
        }
    }
    Ok(out)
}
