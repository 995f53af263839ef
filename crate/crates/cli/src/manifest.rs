//! Run manifests: everything needed to reproduce a run and verify its outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ResolvedConfig;
use crate::{experiments, write_outputs, Check, CliError, Outcome};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub cli_version: String,
    pub core_version: String,
    pub kind: String,
    pub seed: u64,
    pub replicas: usize,
    /// Worker threads of the recorded run; informational only.
    pub threads: usize,
    pub config_sha256: String,
    pub config: ResolvedConfig,
    pub outputs: Vec<OutputRecord>,
    pub checks: Vec<Check>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub identical: bool,
    pub lines: Vec<String>,
}

impl Manifest {
    pub fn new(cfg: &ResolvedConfig, threads: usize, outcome: &Outcome) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            cli_version: env!("CARGO_PKG_VERSION").to_string(),
            core_version: cellinfect::VERSION.to_string(),
            kind: cfg.kind().as_str().to_string(),
            seed: cfg.seed,
            replicas: cfg.replicas,
            threads,
            config_sha256: cfg.hash(),
            config: cfg.clone(),
            outputs: outcome
                .files
                .iter()
                .map(|f| OutputRecord {
                    name: f.name.clone(),
                    bytes: f.bytes.len(),
                    sha256: sha256_hex(&f.bytes),
                })
                .collect(),
            checks: outcome.checks.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("manifest: {e}")))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "manifest schema version {} is not supported (expected {SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        if m.config.hash() != m.config_sha256 {
            return Err(CliError::Validation("manifest: embedded config does not match its hash".into()));
        }
        m.config.validate()?;
        Ok(m)
    }

    /// Re-executes the embedded config into `out` and compares every output hash.
    pub fn replay(&self, out: &Path, threads: usize) -> Result<ReplayReport, CliError> {
        let outcome = experiments::execute(&self.config, threads)?;
        write_outputs(out, &outcome)?;
        Manifest::new(&self.config, threads, &outcome).write(&out.join(MANIFEST_FILE))?;
        let mut identical = outcome.files.len() == self.outputs.len();
        let mut lines = Vec::new();
        for rec in &self.outputs {
            let got = outcome.file(&rec.name).map(|f| sha256_hex(&f.bytes));
            let same = got.as_deref() == Some(rec.sha256.as_str());
            identical &= same;
            lines.push(format!(
                "{} {} {}",
                if same { "MATCH" } else { "MISMATCH" },
                rec.name,
                got.unwrap_or_else(|| "missing".into())
            ));
        }
        lines.push(if identical {
            "replay identical".to_string()
        } else {
            "replay differs".to_string()
        });
        Ok(ReplayReport { identical, lines })
    }
}
