use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use provision::observables::ObservableSet;
use provision::ServiceConfig;
use serde_json::Value;

use crate::batch::sha256_hex;

pub const OBSERVABLE_HEADER: &str = "instance_id,x_bitmask_or_hash,source,W,N,Osat,F,energy,converged";

/// The configuration as a 0/1 string, or a digest when it is long.
pub fn x_label(x: &ServiceConfig) -> String {
    let s = x.to_string();
    if s.len() <= 64 {
        s
    } else {
        format!("sha256:{}", &sha256_hex(s.as_bytes())[..16])
    }
}

pub fn observable_row(id: &str, x: &ServiceConfig, o: &ObservableSet) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        id,
        x_label(x),
        o.source,
        o.w,
        o.n,
        o.osat,
        o.f,
        o.energy,
        o.converged
    )
}

/// Where a command writes its table: a file with a manifest sidecar, or stdout.
pub enum Sink {
    File(PathBuf),
    Stdout,
}

impl Sink {
    pub fn new(out: Option<PathBuf>) -> Self {
        out.map_or(Sink::Stdout, Sink::File)
    }

    pub fn write(&self, body: &[u8], manifest: Value) -> Result<()> {
        match self {
            Sink::Stdout => {
                io::stdout().write_all(body)?;
                Ok(())
            }
            Sink::File(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                }
                fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
                let side = sidecar(path);
                let mut text = serde_json::to_string_pretty(&manifest)?;
                text.push('\n');
                fs::write(&side, text).with_context(|| format!("writing {}", side.display()))
            }
        }
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
