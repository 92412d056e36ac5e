//! Artifact files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use latentreg::data::format_float;
use latentreg::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactRecord {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

pub struct ArtifactDir {
    dir: PathBuf,
    records: Vec<ArtifactRecord>,
    started: f64,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ArtifactDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(ArtifactDir {
            dir: dir.to_path_buf(),
            records: Vec::new(),
            started: unix_now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        self.records.push(ArtifactRecord {
            file: name.to_string(),
            bytes: contents.len(),
            sha256: hex(&Sha256::digest(contents)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Numerical(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json`; the only artifact carrying timestamps.
    pub fn finish(mut self, command: &str, settings: &BTreeMap<String, Vec<String>>) -> Result<PathBuf, CliError> {
        let manifest = serde_json::json!({
            "tool": "latentreg",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "settings": settings,
            "artifacts": self.records,
            "started_unix": self.started,
            "finished_unix": unix_now(),
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        self.records.clear();
        Ok(path)
    }
}

/// Rows of `header` followed by `rows`, comma separated, `\n` line ends.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn matrix_csv(m: &DMatrix<f64>, labels: &[String]) -> Vec<u8> {
    let rows: Vec<Vec<String>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| format_float(m[(i, j)])).collect())
        .collect();
    let header: Vec<&str> = labels.iter().map(String::as_str).collect();
    csv_table(&header, &rows)
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Finite numbers print in shortest round-trip form; ∞ prints as `inf`.
pub fn num(x: f64) -> String {
    format_float(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let t = csv_table(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(String::from_utf8(t).unwrap(), "a,b\n1,2\n");
    }

    #[test]
    fn hashes_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = ArtifactDir::create(dir.path()).unwrap();
        out.write("a.csv", b"abc").unwrap();
        assert_eq!(
            out.records[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let manifest = out.finish("fit", &BTreeMap::new()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
        assert_eq!(v["artifacts"][0]["file"], "a.csv");
    }
}
