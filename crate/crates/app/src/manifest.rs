//! Run manifests: what a command read, wrote and was told, so it can be re-executed.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// As recorded on the command line (relative paths are relative to `cwd`).
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub argv: Vec<String>,
    pub cwd: PathBuf,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: i32,
    pub seed: Option<u64>,
    pub config: Option<FileDigest>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub params: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> AppResult<(String, u64)> {
    let mut file = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| AppError::io(path, e))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((hex(&hasher.finalize()), total))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digests of a file, or of every file below a directory in sorted order.
pub fn digest_path(path: &Path) -> AppResult<Vec<FileDigest>> {
    let meta = std::fs::metadata(path).map_err(|e| AppError::io(path, e))?;
    if !meta.is_dir() {
        let (sha256, bytes) = sha256_file(path)?;
        return Ok(vec![FileDigest { path: path.to_owned(), sha256, bytes }]);
    }
    let mut entries = std::fs::read_dir(path)
        .map_err(|e| AppError::io(path, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AppError::io(path, e))?;
    entries.sort();
    let mut out = Vec::new();
    for entry in entries {
        out.extend(digest_path(&entry)?);
    }
    Ok(out)
}

/// Collects what a command touches while it runs.
#[derive(Debug, Default)]
pub struct RunRecorder {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub params: serde_json::Map<String, serde_json::Value>,
    pub seed: Option<u64>,
}

impl RunRecorder {
    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_owned());
        }
    }

    pub fn output(&mut self, path: &Path) {
        if !self.outputs.iter().any(|p| p == path) {
            self.outputs.push(path.to_owned());
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.params.insert(key.to_owned(), serde_json::to_value(value).expect("param serializes"));
    }

    pub fn digests(paths: &[PathBuf]) -> AppResult<Vec<FileDigest>> {
        let mut out = Vec::new();
        for p in paths.iter().filter(|p| p.exists()) {
            out.extend(digest_path(p)?);
        }
        Ok(out)
    }
}

/// Writes the manifest to `<project_root>/runs/<timestamp>-<command>.json` and returns the path.
pub fn write_manifest(project_root: &Path, manifest: &RunManifest) -> AppResult<PathBuf> {
    let dir = project_root.join(RUNS_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
    let stamp: String = manifest.started_at.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    let slug = manifest.command.replace(' ', "-");
    let mut path = dir.join(format!("{stamp}-{slug}.json"));
    let mut n = 1;
    while path.exists() {
        path = dir.join(format!("{stamp}-{slug}-{n}.json"));
        n += 1;
    }
    let mut body = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    body.push('\n');
    std::fs::write(&path, body).map_err(|e| AppError::io(&path, e))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> AppResult<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::data("manifest", format!("{}: {e}", path.display())))
}

/// Paths in a manifest are relative to its recorded working directory.
pub fn resolve(cwd: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_owned()
    } else {
        cwd.join(path)
    }
}

/// Recorded digests that no longer match the file system, as `(path, reason)`.
pub fn stale(cwd: &Path, expected: &[FileDigest]) -> Vec<(PathBuf, String)> {
    expected
        .iter()
        .filter_map(|d| {
            let path = resolve(cwd, &d.path);
            match sha256_file(&path) {
                Ok((sha, _)) if sha == d.sha256 => None,
                Ok((sha, _)) => Some((d.path.clone(), format!("sha256 {sha}, recorded {}", d.sha256))),
                Err(e) => Some((d.path.clone(), e.message)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, "abc").unwrap();
        let (sha, n) = sha256_file(&p).unwrap();
        assert_eq!(sha, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(n, 3);
    }

    #[test]
    fn directories_digest_in_sorted_order_and_staleness_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("d")).unwrap();
        std::fs::write(dir.path().join("d/b"), "2").unwrap();
        std::fs::write(dir.path().join("d/a"), "1").unwrap();
        let digests = digest_path(&dir.path().join("d")).unwrap();
        let names: Vec<_> = digests.iter().map(|d| d.path.file_name().unwrap().to_owned()).collect();
        assert_eq!(names, ["a", "b"]);
        assert!(stale(dir.path(), &digests).is_empty());
        std::fs::write(dir.path().join("d/b"), "3").unwrap();
        assert_eq!(stale(dir.path(), &digests).len(), 1);
    }
}
