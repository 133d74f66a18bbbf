//! Per-run manifest: config snapshot, input and artifact digests, command log.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    /// Input role to `(path, sha256)`.
    pub inputs: BTreeMap<String, (String, String)>,
    /// Run-relative artifact path to sha256.
    pub artifacts: BTreeMap<String, String>,
    pub commands: Vec<CommandRecord>,
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl RunManifest {
    pub fn load_or_new(run_dir: &Path) -> Result<Self> {
        let p = run_dir.join(MANIFEST_FILE);
        if !p.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    /// Records the digest of every file under `run_dir` except the manifest.
    pub fn record_artifacts(&mut self, run_dir: &Path) -> Result<()> {
        self.artifacts.clear();
        let mut stack: Vec<PathBuf> = vec![run_dir.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
                let path = entry?.path();
                if path.is_dir() {
                    stack.push(path);
                    continue;
                }
                let rel = path.strip_prefix(run_dir).expect("inside run dir");
                if rel == Path::new(MANIFEST_FILE) {
                    continue;
                }
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                self.artifacts.insert(key, file_digest(&path)?);
            }
        }
        Ok(())
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let p = run_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }
}
