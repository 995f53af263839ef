//! Configuration-driven experiment runner for the `cellinfect` engine.
//!
//! `cellinfect run` executes an experiment config and writes CSV/JSON outputs
//! plus a manifest; `cellinfect replay` re-executes a manifest and compares
//! output hashes; `cellinfect validate` parses a config and probes its model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{load_config, ResolvedConfig, RunSettings};
use manifest::Manifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

impl From<cellinfect::Error> for CliError {
    fn from(e: cellinfect::Error) -> Self {
        match e {
            cellinfect::Error::InvalidParameter { .. } => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Outcome of one acceptance check.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// An output file held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<OutputFile>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn file(&self, name: &str) -> Option<&OutputFile> {
        self.files.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Parser)]
#[command(name = "cellinfect", version, about = "Parasite infection in dividing and dying cells: experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment config and write outputs plus a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config replica count.
        #[arg(long)]
        replicas: Option<usize>,
        /// Exit with status 3 when a check fails.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses all cores. Does not change outputs.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse a config and probe its model without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-run a manifest and compare output hashes.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run {
            config,
            seed,
            replicas,
            check,
            out,
            threads,
        } => {
            let (mut cfg, settings) = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = replicas {
                cfg.replicas = n;
            }
            cfg.validate()?;
            let threads = threads.unwrap_or(settings.threads);
            let out = out
                .or(settings.output.clone())
                .unwrap_or_else(|| PathBuf::from("results").join(cfg.kind().as_str()));
            let outcome = run(&cfg, &RunSettings { threads, output: Some(out.clone()) })?;
            for c in &outcome.checks {
                println!("{}", c.line());
            }
            println!("outputs written to {}", out.display());
            Ok(if check && !outcome.all_pass() { EXIT_CHECK_FAILED } else { EXIT_OK })
        }
        Command::Validate { config } => {
            let (cfg, _) = load_config(&config)?;
            for line in validate_report(&cfg) {
                println!("{line}");
            }
            Ok(EXIT_OK)
        }
        Command::Replay { manifest, out, threads } => {
            let m = Manifest::load(&manifest)?;
            let report = m.replay(&out, threads)?;
            for line in &report.lines {
                println!("{line}");
            }
            Ok(if report.identical { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
    }
}

/// Executes `cfg`, writes outputs and the manifest into `settings.output`.
pub fn run(cfg: &ResolvedConfig, settings: &RunSettings) -> Result<Outcome, CliError> {
    let outcome = experiments::execute(cfg, settings.threads)?;
    let dir = settings
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(cfg.kind().as_str()));
    write_outputs(&dir, &outcome)?;
    Manifest::new(cfg, settings.threads, &outcome).write(&dir.join(manifest::MANIFEST_FILE))?;
    Ok(outcome)
}

pub fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for f in &outcome.files {
        std::fs::write(dir.join(&f.name), &f.bytes)?;
    }
    Ok(())
}

/// Lines printed by `validate`: the config summary then one line per EU clause.
pub fn validate_report(cfg: &ResolvedConfig) -> Vec<String> {
    let mut lines = vec![format!(
        "ok: kind {} (seed {}, replicas {}, config sha256 {})",
        cfg.kind().as_str(),
        cfg.seed,
        cfg.replicas,
        cfg.hash()
    )];
    if let Some(model) = &cfg.model {
        let report = cellinfect::model::validate_eu(model);
        for v in &report.clauses {
            let tag = if v.pass { "ok" } else { "warning" };
            lines.push(format!("{tag}: {:?}: {}", v.clause, v.detail));
        }
    }
    lines
}
