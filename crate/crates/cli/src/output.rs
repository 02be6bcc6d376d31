//! Output files and run manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FORMAT: u32 = 1;

/// Everything needed to reproduce a command's data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: u32,
    pub tool_version: String,
    pub command: String,
    pub scenario_path: String,
    /// Hash of the scenario file as read, before overrides.
    pub scenario_sha256: String,
    /// Command-line overrides as given.
    pub overrides: BTreeMap<String, String>,
    /// The scenario after overrides; replays read this, not the file.
    pub effective_scenario: String,
    /// Command parameters that are not part of the scenario.
    pub params: serde_json::Value,
    pub seed: u64,
    /// Hash over command, params and effective scenario.
    pub config_sha256: String,
    pub output_dir: String,
    /// Data file name to content hash.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn config_hash(command: &str, params: &serde_json::Value, effective: &str) -> String {
        sha256_hex(format!("{command}\n{params}\n{effective}").as_bytes())
    }

    /// Short form of the config hash stamped on every CSV row.
    pub fn tag(&self) -> &str {
        &self.config_sha256[..16]
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))?;
        if m.format != MANIFEST_FORMAT {
            return Err(CliError::Config(format!(
                "manifest format {} is not supported",
                m.format
            )));
        }
        let expect = Self::config_hash(&m.command, &m.params, &m.effective_scenario);
        if expect != m.config_sha256 {
            return Err(CliError::Config(format!(
                "manifest {} was edited: config hash does not match its contents",
                path.display()
            )));
        }
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| {
        CliError::Config(format!("cannot write {name} in {}: {e}", dir.display()))
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

/// Collects data files, then writes them and the manifest that lists them.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        manifest.output_dir = self.dir.display().to_string();
        for (name, bytes) in &self.files {
            write_atomic(&self.dir, name, bytes)?;
            manifest.outputs.insert(name.clone(), sha256_hex(bytes));
        }
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_atomic(
            &self.dir,
            &format!("{}.manifest.json", manifest.command),
            json.as_bytes(),
        )
    }
}

/// CSV text with a header row.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Shortest round-trip text of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Empty for `None`.
pub fn opt<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.csv", b"one\n").unwrap();
        write_atomic(dir.path(), "a.csv", b"two\n").unwrap();
        assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), b"two\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn manifest_rejects_edits() {
        let dir = tempfile::tempdir().unwrap();
        let params = serde_json::json!({"replication": 0});
        let m = RunManifest {
            format: MANIFEST_FORMAT,
            tool_version: "0".into(),
            command: "run".into(),
            scenario_path: "s.toml".into(),
            scenario_sha256: sha256_hex(b"x"),
            overrides: BTreeMap::new(),
            effective_scenario: "x".into(),
            config_sha256: RunManifest::config_hash("run", &params, "x"),
            params,
            seed: 1,
            output_dir: String::new(),
            outputs: BTreeMap::new(),
        };
        let path = OutputSet::new(dir.path().to_path_buf())
            .finish(m.clone())
            .unwrap();
        assert_eq!(
            RunManifest::load(&path).unwrap().config_sha256,
            m.config_sha256
        );
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"x\"", "\"y\"");
        std::fs::write(&path, text).unwrap();
        assert!(RunManifest::load(&path).is_err());
    }

    #[test]
    fn csv_has_header() {
        let b = csv_bytes(&["a", "b"], vec![vec![num(0.1), opt::<usize>(None)]]);
        assert_eq!(String::from_utf8(b).unwrap(), "a,b\n0.1,\n");
    }
}
