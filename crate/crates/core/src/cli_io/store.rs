//! Manifest-backed run directories. Every file is written to a temporary
//! file in the run directory and renamed into place; the manifest records a
//! SHA-256 digest per file and is replaced the same way.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;
use thiserror::Error;

use super::config::hex;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run `{0}` does not exist")]
    MissingRun(String),
    #[error("run `{run_id}` has no file `{file}`")]
    MissingFile { run_id: String, file: String },
    #[error("digest mismatch for `{file}` in run `{run_id}`: manifest {expected}, found {actual}")]
    DigestMismatch {
        run_id: String,
        file: String,
        expected: String,
        actual: String,
    },
    #[error("invalid file name `{0}`")]
    InvalidName(String),
    #[error("corrupt manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: String,
    pub status: String,
    pub exit_code: i32,
    pub started_unix_ms: u128,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub tool_version: String,
    pub created_unix_ms: u128,
    pub commands: Vec<CommandRecord>,
    pub files: BTreeMap<String, FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

fn check_name(name: &str) -> Result<(), StoreError> {
    let ok = !name.is_empty()
        && name != MANIFEST
        && !name.starts_with('.')
        && !name.contains(['/', '\\']);
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidName(name.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    /// New run directory `<hash prefix>-<unix ms>[-n]` with an empty manifest.
    pub fn create_run(&self, config_hash: &str) -> Result<String, StoreError> {
        fs::create_dir_all(&self.root)?;
        let prefix: String = config_hash.chars().take(12).collect();
        let created = unix_ms();
        let base = format!("{prefix}-{created}");
        let mut n = 0;
        let run_id = loop {
            let id = if n == 0 { base.clone() } else { format!("{base}-{n}") };
            match fs::create_dir(self.root.join(&id)) {
                Ok(()) => break id,
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(e.into()),
            }
        };
        let manifest = RunManifest {
            run_id: run_id.clone(),
            config_hash: config_hash.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_ms: created,
            commands: Vec::new(),
            files: BTreeMap::new(),
        };
        self.write_manifest(&manifest)?;
        Ok(run_id)
    }

    pub fn manifest(&self, run_id: &str) -> Result<RunManifest, StoreError> {
        let path = self.run_dir(run_id).join(MANIFEST);
        match fs::read(&path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::MissingRun(run_id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    fn write_manifest(&self, m: &RunManifest) -> Result<(), StoreError> {
        let mut text = serde_json::to_string_pretty(m)?;
        text.push('\n');
        write_atomic(&self.run_dir(&m.run_id), MANIFEST, text.as_bytes())?;
        Ok(())
    }

    /// Store `bytes` as `name` and record its digest; returns the digest.
    pub fn put(&self, run_id: &str, name: &str, bytes: &[u8]) -> Result<String, StoreError> {
        check_name(name)?;
        let mut m = self.manifest(run_id)?;
        write_atomic(&self.run_dir(run_id), name, bytes)?;
        let digest = sha256_hex(bytes);
        m.files.insert(
            name.to_string(),
            FileEntry {
                sha256: digest.clone(),
                bytes: bytes.len() as u64,
            },
        );
        self.write_manifest(&m)?;
        Ok(digest)
    }

    /// Contents of `name`, checked against the manifest digest.
    pub fn get(&self, run_id: &str, name: &str) -> Result<Vec<u8>, StoreError> {
        let m = self.manifest(run_id)?;
        let entry = m.files.get(name).ok_or_else(|| StoreError::MissingFile {
            run_id: run_id.to_string(),
            file: name.to_string(),
        })?;
        let bytes = fs::read(self.run_dir(run_id).join(name))?;
        let actual = sha256_hex(&bytes);
        if actual != entry.sha256 {
            return Err(StoreError::DigestMismatch {
                run_id: run_id.to_string(),
                file: name.to_string(),
                expected: entry.sha256.clone(),
                actual,
            });
        }
        Ok(bytes)
    }

    /// Check every file listed in the manifest.
    pub fn verify(&self, run_id: &str) -> Result<(), StoreError> {
        let m = self.manifest(run_id)?;
        for name in m.files.keys() {
            self.get(run_id, name)?;
        }
        Ok(())
    }

    pub fn record_command(&self, run_id: &str, record: CommandRecord) -> Result<(), StoreError> {
        let mut m = self.manifest(run_id)?;
        m.commands.push(record);
        self.write_manifest(&m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let id = store.create_run("abcdef0123456789").unwrap();
        assert!(id.starts_with("abcdef012345-"));
        store.put(&id, "a.csv", b"k,t\n1,2\n").unwrap();
        assert_eq!(store.get(&id, "a.csv").unwrap(), b"k,t\n1,2\n");
        assert_eq!(store.manifest(&id).unwrap().files["a.csv"].bytes, 8);

        fs::write(store.run_dir(&id).join("a.csv"), b"k,t\n1,3\n").unwrap();
        assert!(matches!(store.get(&id, "a.csv"), Err(StoreError::DigestMismatch { .. })));
        assert!(matches!(store.verify(&id), Err(StoreError::DigestMismatch { .. })));
        assert!(matches!(store.get("nope", "a.csv"), Err(StoreError::MissingRun(_))));
        assert!(matches!(store.get(&id, "b.csv"), Err(StoreError::MissingFile { .. })));
        assert!(matches!(store.put(&id, "../x", b""), Err(StoreError::InvalidName(_))));
    }

    #[test]
    fn same_hash_distinct_runs() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let a = store.create_run("ffff").unwrap();
        let b = store.create_run("ffff").unwrap();
        assert_ne!(a, b);
        assert_eq!(
            store.manifest(&a).unwrap().config_hash,
            store.manifest(&b).unwrap().config_hash
        );
        // no temporary files survive a put
        store.put(&a, "x.json", b"{}").unwrap();
        let names: Vec<String> = fs::read_dir(store.run_dir(&a))
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        let mut names = names;
        names.sort();
        assert_eq!(names, vec!["manifest.json", "x.json"]);
    }
}
