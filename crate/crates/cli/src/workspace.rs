//! Artifact directory: stage manifests, up-to-date checks and the run lock.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use narrative_core::store;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub stage: String,
    /// Input path (artifact-relative when inside the artifact directory) -> SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config_hash: String,
    pub tool_version: String,
    pub started_at: u64,
    pub finished_at: u64,
    pub summary: serde_json::Value,
}

pub struct Workspace {
    pub root: PathBuf,
}

/// Held for the duration of a command; removes the lock file on drop.
pub struct RunLock {
    path: PathBuf,
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub enum Freshness {
    UpToDate(ArtifactManifest),
    Stale,
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join("manifests")).with_context(|| format!("creating {}", root.display()))?;
        Ok(Workspace { root: root.to_path_buf() })
    }

    pub fn lock(&self) -> Result<RunLock> {
        let path = self.root.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => {
                fs::write(&path, std::process::id().to_string())?;
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(path).into()),
            Err(e) => Err(e).context("creating lock file"),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{stage}.json"))
    }

    pub fn manifest(&self, stage: &str) -> Option<ArtifactManifest> {
        store::read_json(&self.manifest_path(stage)).ok()
    }

    /// Key used for `path` in manifests.
    pub fn key(&self, path: &Path) -> String {
        match path.strip_prefix(&self.root) {
            Ok(rel) => rel.to_string_lossy().into_owned(),
            Err(_) => path.to_string_lossy().into_owned(),
        }
    }

    pub fn hash_files(&self, paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        paths
            .iter()
            .map(|p| {
                let h = store::file_hash(p).map_err(|e| CliError::Data(format!("input {}: {e}", p.display())))?;
                Ok((self.key(p), h))
            })
            .collect()
    }

    /// Upstream manifest, checked against the configuration it must have been built with.
    pub fn require(&self, stage: &str, expected_config: &str) -> Result<ArtifactManifest> {
        let m = self.manifest(stage).ok_or_else(|| CliError::MissingUpstream { stage: stage.into() })?;
        if m.config_hash != expected_config {
            return Err(CliError::StaleUpstream { stage: stage.into() }.into());
        }
        for (rel, hash) in &m.outputs {
            match store::file_hash(&self.root.join(rel)) {
                Ok(h) if &h == hash => {}
                _ => return Err(CliError::MissingUpstream { stage: stage.into() }.into()),
            }
        }
        Ok(m)
    }

    pub fn freshness(&self, stage: &str, config_hash: &str, inputs: &BTreeMap<String, String>) -> Freshness {
        let Some(m) = self.manifest(stage) else { return Freshness::Stale };
        let outputs_intact =
            m.outputs.iter().all(|(rel, h)| store::file_hash(&self.root.join(rel)).is_ok_and(|got| &got == h));
        if m.config_hash == config_hash && &m.inputs == inputs && outputs_intact {
            Freshness::UpToDate(m)
        } else {
            Freshness::Stale
        }
    }

    pub fn record(
        &self,
        stage: &str,
        config_hash: &str,
        inputs: BTreeMap<String, String>,
        outputs: &[PathBuf],
        started_at: u64,
        summary: serde_json::Value,
    ) -> Result<ArtifactManifest> {
        let manifest = ArtifactManifest {
            stage: stage.into(),
            inputs,
            outputs: self.hash_files(outputs)?,
            config_hash: config_hash.into(),
            tool_version: TOOL_VERSION.into(),
            started_at,
            finished_at: now(),
            summary,
        };
        store::write_json(&self.manifest_path(stage), &manifest)?;
        Ok(manifest)
    }

    pub fn clock() -> u64 {
        now()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let held = ws.lock().unwrap();
        let err = ws.lock().err().unwrap();
        assert!(matches!(err.downcast_ref::<CliError>(), Some(CliError::Locked(_))));
        drop(held);
        assert!(ws.lock().is_ok());
    }

    #[test]
    fn freshness_tracks_config_inputs_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let out = ws.path("out.txt");
        fs::write(&out, "x").unwrap();
        let inputs = BTreeMap::from([("in".to_string(), "h1".to_string())]);
        ws.record("s", "c1", inputs.clone(), std::slice::from_ref(&out), 0, serde_json::Value::Null).unwrap();
        assert!(matches!(ws.freshness("s", "c1", &inputs), Freshness::UpToDate(_)));
        assert!(matches!(ws.freshness("s", "c2", &inputs), Freshness::Stale));
        let other = BTreeMap::from([("in".to_string(), "h2".to_string())]);
        assert!(matches!(ws.freshness("s", "c1", &other), Freshness::Stale));
        fs::write(&out, "y").unwrap();
        assert!(matches!(ws.freshness("s", "c1", &inputs), Freshness::Stale));
        assert!(ws.require("s", "c1").is_err());
        assert!(matches!(
            ws.require("nope", "c1").unwrap_err().downcast_ref::<CliError>(),
            Some(CliError::MissingUpstream { .. })
        ));
    }
}
