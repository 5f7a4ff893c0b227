//! Artifact writers. Every file starts with the hash of the configuration
//! that produced it: a `config_hash` field in JSON, a `# config_hash=` line
//! in CSV. Floats are written in shortest round-trip form.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const HASH_PREFIX: &str = "# config_hash=";

/// A JSON artifact wrapped with its configuration hash.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Artifact<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

pub struct OutDir {
    root: PathBuf,
    hash: String,
}

impl OutDir {
    pub fn create(root: &Path, hash: String) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            hash,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, body: T) -> CliResult<PathBuf> {
        let path = self.path(name);
        let artifact = Artifact {
            config_hash: self.hash.clone(),
            body,
        };
        let mut text = serde_json::to_string_pretty(&artifact)
            .map_err(|e| CliError::Json { path: path.clone(), source: e })?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let path = self.path(name);
        let mut file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        writeln!(file, "{HASH_PREFIX}{}", self.hash).map_err(|e| CliError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let to_io = |e: csv::Error| CliError::io(&path, std::io::Error::other(e));
        w.write_record(header).map_err(to_io)?;
        for row in rows {
            w.write_record(row).map_err(to_io)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Reads an artifact and checks that it came from the same configuration.
pub fn read_artifact<T: DeserializeOwned>(path: &Path, expected_hash: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let artifact: Artifact<T> = serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    if artifact.config_hash != expected_hash {
        return Err(CliError::Validation(format!(
            "{}: produced by configuration {}, current configuration is {}",
            path.display(),
            artifact.config_hash,
            expected_hash
        )));
    }
    Ok(artifact.body)
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
