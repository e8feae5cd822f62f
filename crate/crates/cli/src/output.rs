use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, Format};

#[derive(Debug, Serialize)]
pub struct Versions {
    pub setpoint: &'static str,
    pub manifest: u32,
}

/// Written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_path: Option<String>,
    /// SHA-256 of the input file's bytes.
    pub config_sha256: Option<String>,
    /// Hash of the parsed scenario, when the input is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_hash: Option<String>,
    pub seed: Option<u64>,
    pub seed_override: bool,
    pub status: &'static str,
    pub outputs: Vec<String>,
    pub versions: Versions,
    pub created_at_ms: u128,
}

/// Collects a run's output files and writes them with a manifest.
pub struct Outputs {
    dir: PathBuf,
    format: Option<Format>,
    written: Vec<String>,
    manifest: Manifest,
}

impl Outputs {
    pub fn new(
        command: &str,
        dir: &Path,
        format: Option<Format>,
        config: Option<&Path>,
    ) -> Result<Self, CliError> {
        let config_sha256 = match config {
            Some(p) => Some(hex::encode(Sha256::digest(
                std::fs::read(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            ))),
            None => None,
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
            manifest: Manifest {
                command: command.to_string(),
                config_path: config.map(|p| p.display().to_string()),
                config_sha256,
                scenario_hash: None,
                seed: None,
                seed_override: false,
                status: "ok",
                outputs: Vec::new(),
                versions: Versions {
                    setpoint: env!("CARGO_PKG_VERSION"),
                    manifest: 1,
                },
                created_at_ms: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis())
                    .unwrap_or(0),
            },
        })
    }

    pub fn seed(&mut self, seed: u64, overridden: bool) {
        self.manifest.seed = Some(seed);
        self.manifest.seed_override = overridden;
    }

    pub fn scenario_hash(&mut self, hash: String) {
        self.manifest.scenario_hash = Some(hash);
    }

    pub fn status(&mut self, status: &'static str) {
        self.manifest.status = status;
    }

    fn wants(&self, format: Format) -> bool {
        self.format.is_none_or(|f| f == format)
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", self.dir.display())))?;
        let path = self.dir.join(name);
        std::fs::write(&path, body)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        tracing::info!(path = %path.display(), "wrote");
        self.written.push(name.to_string());
        Ok(())
    }

    /// Pretty JSON, skipped under `--format csv` unless `always`.
    pub fn json<T: Serialize>(
        &mut self,
        name: &str,
        value: &T,
        always: bool,
    ) -> Result<(), CliError> {
        if always || self.wants(Format::Json) {
            let body = serde_json::to_string_pretty(value).expect("outputs serialize") + "\n";
            self.write(name, &body)?;
        }
        Ok(())
    }

    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        if self.wants(Format::Csv) {
            self.write(name, body)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.manifest.outputs = std::mem::take(&mut self.written);
        let body =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        self.write("manifest.json", &body)
    }
}
