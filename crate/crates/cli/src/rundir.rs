//! Run directory layout, locking and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use polyprompt::io::{sha256_file, write_atomic};
use serde::{Deserialize, Serialize};

use crate::error::{runtime, CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".lock";
pub const SUBDIRS: [&str; 5] = ["records", "metrics", "traces", "reports", "checkpoints"];
pub const MANIFEST_FORMAT: &str = "polyprompt-run/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub id: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub run_id: String,
    pub config: serde_json::Value,
    pub config_digest: String,
    pub corpus_digest: Option<String>,
    /// Benchmark id to digest of the items as loaded.
    pub benchmark_digests: BTreeMap<String, String>,
    pub models: Vec<ModelEndpoint>,
    pub seeds: BTreeMap<String, u64>,
    /// `{model}__{benchmark}` to the id of its normalization context.
    pub context_ids: BTreeMap<String, String>,
    pub created_at: u64,
    pub updated_at: u64,
    /// Set while a command runs. A manifest left in this state belongs to an
    /// interrupted command, and its inventory is not checked.
    pub active_command: Option<String>,
    /// Relative path to SHA-256 of every output file.
    pub artifacts: BTreeMap<String, String>,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn is_temp(name: &str) -> bool {
    name.rsplit_once(".tmp").is_some_and(|(_, rest)| rest.starts_with(|c: char| c.is_ascii_digit()))
}

/// Digest of every output file under the run directory, keyed by `/`-separated relative path.
pub fn inventory(root: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for sub in SUBDIRS {
        let dir = root.join(sub);
        if !dir.exists() {
            continue;
        }
        for entry in walkdir::WalkDir::new(&dir).sort_by_file_name() {
            let entry = entry.map_err(runtime("io"))?;
            if !entry.file_type().is_file() || is_temp(&entry.file_name().to_string_lossy()) {
                continue;
            }
            let rel = entry.path().strip_prefix(root).expect("under root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.insert(key, sha256_file(entry.path()).map_err(runtime("io"))?);
        }
    }
    Ok(out)
}

/// Compares the recorded inventory with the files on disk.
pub fn verify(root: &Path, manifest: &RunManifest) -> CliResult<()> {
    let actual = inventory(root)?;
    let mut problems = Vec::new();
    for (path, digest) in &manifest.artifacts {
        match actual.get(path) {
            None => problems.push(format!("{path}: missing")),
            Some(d) if d != digest => problems.push(format!("{path}: digest mismatch")),
            _ => {}
        }
    }
    for path in actual.keys() {
        if !manifest.artifacts.contains_key(path) {
            problems.push(format!("{path}: not in manifest"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::validation("tampered", format!("artifacts in {} do not match the manifest", root.display()))
            .with_details(problems))
    }
}

pub fn read_manifest(root: &Path) -> CliResult<Option<RunManifest>> {
    let path = root.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(&path).map_err(runtime("io"))?;
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| CliError::validation("manifest", format!("{}: {e}", path.display())))
}

fn write_manifest(root: &Path, m: &RunManifest) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(m).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&root.join(MANIFEST), &bytes).map_err(runtime("io"))
}

fn pid_alive(pid: u32) -> bool {
    if pid == std::process::id() {
        return true;
    }
    if cfg!(target_os = "linux") {
        Path::new(&format!("/proc/{pid}")).exists()
    } else {
        true
    }
}

/// Exclusive claim on a run directory, released on drop. A lock left by a
/// process that no longer exists is taken over.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(root: &Path) -> CliResult<Self> {
        let path = root.join(LOCK);
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => {
                    fs::write(&path, std::process::id().to_string()).map_err(runtime("io"))?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).unwrap_or_default();
                    match holder.trim().parse::<u32>() {
                        Ok(pid) if pid_alive(pid) => {
                            return Err(CliError::runtime("locked", format!("{} is in use by process {pid}", root.display())))
                        }
                        _ => {
                            let _ = fs::remove_file(&path);
                        }
                    }
                }
                Err(e) => return Err(CliError::runtime("io", format!("{}: {e}", path.display()))),
            }
        }
        Err(CliError::runtime("locked", format!("could not lock {}", root.display())))
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// An open, locked run directory.
#[derive(Debug)]
pub struct RunDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
    _lock: RunLock,
}

impl RunDir {
    /// Creates or reopens `root`, checks its artifacts against the manifest and
    /// marks `command` as running. `fresh` is the manifest for a new run.
    pub fn open(root: &Path, command: &str, fresh: RunManifest) -> CliResult<Self> {
        Self::open_with(root, command, Some(fresh))
    }

    /// Reopens a run that already has a manifest, whatever its configuration.
    pub fn open_existing(root: &Path, command: &str) -> CliResult<Self> {
        Self::open_with(root, command, None)
    }

    fn open_with(root: &Path, command: &str, fresh: Option<RunManifest>) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(runtime("io"))?;
        let lock = RunLock::acquire(root)?;
        for sub in SUBDIRS {
            fs::create_dir_all(root.join(sub)).map_err(runtime("io"))?;
        }
        remove_temp_files(root)?;
        let manifest = match (read_manifest(root)?, fresh) {
            (Some(m), fresh) => {
                if m.active_command.is_none() {
                    verify(root, &m)?;
                }
                if fresh.is_some_and(|f| f.config_digest != m.config_digest) {
                    return Err(CliError::validation(
                        "config_mismatch",
                        format!("{} was created with a different configuration", root.display()),
                    ));
                }
                m
            }
            (None, Some(fresh)) => fresh,
            (None, None) => {
                return Err(CliError::validation("missing_store", format!("{} has no {MANIFEST}", root.display())))
            }
        };
        let mut dir = Self { root: root.to_path_buf(), manifest, _lock: lock };
        dir.manifest.active_command = Some(command.to_string());
        write_manifest(&dir.root, &dir.manifest)?;
        Ok(dir)
    }

    pub fn path(&self, sub: &str, name: &str) -> PathBuf {
        self.root.join(sub).join(name)
    }

    /// Records the current inventory and clears the running mark.
    pub fn finish(mut self) -> CliResult<()> {
        self.manifest.artifacts = inventory(&self.root)?;
        self.manifest.active_command = None;
        self.manifest.updated_at = now();
        write_manifest(&self.root, &self.manifest)
    }

    /// Writes the manifest without finishing, e.g. after recording a context id.
    pub fn checkpoint_manifest(&self) -> CliResult<()> {
        write_manifest(&self.root, &self.manifest)
    }
}

fn remove_temp_files(root: &Path) -> CliResult<()> {
    for sub in SUBDIRS {
        for entry in walkdir::WalkDir::new(root.join(sub)) {
            let entry = entry.map_err(runtime("io"))?;
            if entry.file_type().is_file() && is_temp(&entry.file_name().to_string_lossy()) {
                fs::remove_file(entry.path()).map_err(runtime("io"))?;
            }
        }
    }
    for entry in fs::read_dir(root).map_err(runtime("io"))? {
        let entry = entry.map_err(runtime("io"))?;
        if is_temp(&entry.file_name().to_string_lossy()) {
            fs::remove_file(entry.path()).map_err(runtime("io"))?;
        }
    }
    Ok(())
}
