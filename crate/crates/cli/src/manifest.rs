use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record written next to the outputs of every run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub threads: usize,
    pub config: Value,
    pub config_sources: BTreeMap<String, &'static str>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub extra: Value,
    pub started_unix_s: u64,
    pub wall_time_s: f64,
}

pub struct Recorder {
    pub manifest: RunManifest,
    started: Instant,
}

fn hash_file(path: &Path) -> CliResult<Artifact> {
    let bytes = scsr::io::read_bytes(path)?;
    Ok(Artifact {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

impl Recorder {
    pub fn start(command: &str, threads: usize) -> Self {
        Self {
            manifest: RunManifest {
                tool_version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                argv: std::env::args().collect(),
                threads,
                config: Value::Null,
                config_sources: BTreeMap::new(),
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                extra: Value::Null,
                started_unix_s: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                wall_time_s: 0.0,
            },
            started: Instant::now(),
        }
    }

    pub fn config<T: Serialize>(&mut self, config: &T, sources: BTreeMap<String, &'static str>) {
        self.manifest.config = serde_json::to_value(config).expect("config serializes");
        self.manifest.config_sources = sources;
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_string(), seed);
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.inputs.push(hash_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.outputs.push(hash_file(path)?);
        Ok(())
    }

    /// Writes the manifest to `path` and returns it.
    pub fn finish(mut self, path: &Path) -> CliResult<PathBuf> {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        scsr::io::write_json(path, &self.manifest)?;
        Ok(path.to_path_buf())
    }
}

/// `out.ext` gets `out.ext.manifest.json`; a directory written by `command`
/// gets `<dir>/<command>.manifest.json`.
pub fn manifest_path(output: &Path, dir_command: Option<&str>) -> PathBuf {
    match dir_command {
        Some(command) => output.join(format!("{command}.manifest.json")),
        None => {
            let mut name = output.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            output.with_file_name(name)
        }
    }
}
