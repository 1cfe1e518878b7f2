//! Output directory handling: atomic writes, SHA-256 manifest, CSV reading.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    /// File name to SHA-256 of every artifact read.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub config: String,
    pub stages: BTreeMap<String, StageRecord>,
}

/// An output directory plus the record of the stage currently running.
#[derive(Debug)]
pub struct Workspace {
    dir: PathBuf,
    config_hash: String,
    record: StageRecord,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>, config_hash: String) -> Self {
        Self { dir: dir.into(), record: StageRecord { config_hash: config_hash.clone(), ..Default::default() }, config_hash }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(name), bytes)?;
        self.record.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Reads an artifact produced by `stage`.
    pub fn read(&mut self, name: &str, stage: &str) -> Result<Vec<u8>> {
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                path: path.display().to_string(),
                stage: stage.to_string(),
            },
            _ => Error::Io(e),
        })?;
        self.record.inputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_text(&mut self, name: &str, stage: &str) -> Result<String> {
        String::from_utf8(self.read(name, stage)?)
            .map_err(|_| Error::Numerical(format!("{name} is not valid UTF-8")))
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&mut self, name: &str, stage: &str) -> Result<T> {
        Ok(serde_json::from_slice(&self.read(name, stage)?)?)
    }

    pub fn read_csv(&mut self, name: &str, stage: &str) -> Result<Csv> {
        Csv::parse(name, &self.read_text(name, stage)?)
    }

    /// Closes the current stage into the manifest.
    pub fn finish_stage(&mut self, stage: &str, runtime_s: f64, config_text: &str) -> Result<()> {
        let mut manifest = self.load_manifest()?;
        manifest.version = env!("CARGO_PKG_VERSION").to_string();
        manifest.config_hash = self.config_hash.clone();
        manifest.config = config_text.to_string();
        let mut record = std::mem::replace(
            &mut self.record,
            StageRecord { config_hash: self.config_hash.clone(), ..Default::default() },
        );
        record.runtime_s = runtime_s;
        manifest.stages.insert(stage.to_string(), record);
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.path(MANIFEST), &bytes)
    }

    pub fn load_manifest(&self) -> Result<Manifest> {
        match fs::read(self.path(MANIFEST)) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(e.into()),
        }
    }
}

/// Header plus rows of a comma-separated file without quoting.
#[derive(Debug, Clone)]
pub struct Csv {
    name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Numerical(format!("{name} is empty")))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(|s| s.trim().to_string()).collect()).collect();
        if let Some(bad) = rows.iter().position(|r| r.len() != header.len()) {
            return Err(Error::Numerical(format!("{name}: row {} has the wrong width", bad + 2)));
        }
        Ok(Self { name: name.to_string(), header, rows })
    }

    pub fn column(&self, key: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == key)
            .ok_or_else(|| Error::Numerical(format!("{} has no column `{key}`", self.name)))
    }

    /// Columns whose names start with `prefix`, in file order.
    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<usize> {
        (0..self.header.len()).filter(|&c| self.header[c].starts_with(prefix)).collect()
    }

    pub fn get<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let v = &self.rows[row][col];
        v.parse()
            .map_err(|_| Error::Numerical(format!("{}: cannot parse `{v}` in column `{}`", self.name, self.header[col])))
    }

    pub fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let c = self.column(key)?;
        (0..self.rows.len()).map(|r| self.get(r, c)).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::new(dir.path(), "abc".into());
        ws.write("a.csv", b"x,y\n1,2\n").unwrap();
        assert!(!dir.path().join(".a.csv.tmp").exists());
        let csv = ws.read_csv("a.csv", "first").unwrap();
        assert_eq!(csv.floats("y").unwrap(), vec![2.0]);
        ws.finish_stage("first", 0.5, "k = v\n").unwrap();
        let m = ws.load_manifest().unwrap();
        let rec = &m.stages["first"];
        assert_eq!(rec.outputs["a.csv"], sha256_hex(b"x,y\n1,2\n"));
        assert_eq!(rec.inputs["a.csv"], rec.outputs["a.csv"]);
        assert_eq!(m.config_hash, "abc");
    }

    #[test]
    fn missing_artifact_names_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::new(dir.path(), String::new());
        let err = ws.read("graph.bin", "graph").unwrap_err();
        assert!(matches!(err, Error::MissingArtifact { ref stage, .. } if stage == "graph"));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn sha_of_empty() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
