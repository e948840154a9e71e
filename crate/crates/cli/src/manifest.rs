//! Run manifests: what a command read, what it wrote, and their digests.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<FileDigest>,
    /// paths relative to the output directory
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    /// Input and output digests only, the part that must not change between
    /// reruns.
    pub fn checksums(&self) -> Vec<(String, String)> {
        self.inputs
            .iter()
            .chain(&self.outputs)
            .map(|d| (d.path.clone(), d.sha256.clone()))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn digest_file(path: &Path) -> Result<(String, u64)> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}

/// Tracks one command's inputs and the files it writes under `dir`.
#[derive(Debug)]
pub struct Run {
    dir: PathBuf,
    command: String,
    config_hash: String,
    seed: u64,
    started_at: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

impl Run {
    pub fn start(dir: &Path, command: &str, config_hash: String, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_hash,
            seed,
            started_at: chrono::Utc::now().to_rfc3339(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    pub fn inputs(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        for p in paths {
            self.input(&p);
        }
    }

    fn record(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|n| n == name) {
            self.outputs.push(name.to_string());
        }
        self.dir.join(name)
    }

    /// Registers `name` as an output and returns its full path.
    pub fn output_path(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.record(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(path)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.output_path(name)?;
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes through `f` into a buffered file.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.output_path(name)?;
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        Ok(path)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            let (sha256, bytes) = digest_file(p)?;
            inputs.push(FileDigest {
                path: p.display().to_string(),
                sha256,
                bytes,
            });
        }
        let mut names = self.outputs.clone();
        names.sort();
        let mut outputs = Vec::new();
        for n in names {
            let (sha256, bytes) = digest_file(&self.dir.join(&n))?;
            outputs.push(FileDigest {
                path: n,
                sha256,
                bytes,
            });
        }
        let manifest = RunManifest {
            tool: "iggy".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_hash: self.config_hash,
            seed: self.seed,
            started_at: self.started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            inputs,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join(MANIFEST_NAME), text)?;
        Ok(manifest)
    }
}
