//! Run manifests: what was run and which files came out.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub started: String,
    pub finished: Option<String>,
    /// "running", "complete" or "failed"
    pub status: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// A manifest on disk, rewritten as the run progresses.
pub struct ManifestWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl ManifestWriter {
    /// Creates `dir` and writes the initial manifest.
    pub fn start(dir: &Path, command: &str, config_json: &str, master_seed: u64) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let manifest = RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            master_seed,
            started: now(),
            finished: None,
            status: "running".into(),
            files: Vec::new(),
        };
        let w = Self { dir: dir.to_path_buf(), manifest };
        w.save()?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn save(&self) -> anyhow::Result<()> {
        let path = self.dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }

    /// Writes `bytes` to `name` in the run directory and lists it.
    pub fn write_file(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(name)?;
        Ok(path)
    }

    /// Lists a file already written to the run directory.
    pub fn record(&mut self, name: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        let bytes = std::fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        self.manifest.files.retain(|f| f.path != name);
        self.manifest.files.push(FileEntry { path: name.into(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<RunManifest> {
        self.manifest.finished = Some(now());
        self.manifest.status = "complete".into();
        self.save()?;
        Ok(self.manifest)
    }

    pub fn fail(mut self) {
        self.manifest.finished = Some(now());
        self.manifest.status = "failed".into();
        let _ = self.save();
    }
}
