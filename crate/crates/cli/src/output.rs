use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    inputs: &'a [FileEntry],
    outputs: Vec<FileEntry>,
}

/// Input files read by a command, hashed as they are read.
#[derive(Default)]
pub struct Inputs {
    files: Vec<FileEntry>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| {
            CliError::Data(format!("cannot read input {}: {e}", path.display()))
        })?;
        self.files.push(FileEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn read_text(&mut self, path: &Path) -> Result<String, CliError> {
        String::from_utf8(self.read(path)?)
            .map_err(|_| CliError::Data(format!("{} is not UTF-8 text", path.display())))
    }
}

/// One command's output directory. Files are recorded as they are written;
/// [`RunDir::finish`] adds the resolved config and the manifest.
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<(String, String)>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| {
            CliError::Data(format!("cannot create output directory {}: {e}", root.display()))
        })?;
        Ok(RunDir {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, bytes)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))?;
        self.outputs.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn finish(
        mut self,
        command: &str,
        seed: u64,
        config_toml: &str,
        inputs: &Inputs,
    ) -> Result<(), CliError> {
        self.write("config.toml", config_toml.as_bytes())?;
        let manifest = Manifest {
            command,
            seed,
            config_hash: sha256_hex(config_toml.as_bytes()),
            inputs: &inputs.files,
            outputs: self
                .outputs
                .iter()
                .map(|(p, h)| FileEntry {
                    path: p.clone(),
                    sha256: h.clone(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let p = self.path("manifest.json");
        fs::write(&p, text)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))
    }
}
