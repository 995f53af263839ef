//! Experiment configuration files.
//!
//! A config is a TOML document with a top-level `kind`, run settings, an optional
//! model (inline table or path to a model file) and a kind-specific `[params]` table.

use std::path::{Path, PathBuf};

use cellinfect::model::ModelSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MeanCellsRegime,
    SharingComparison,
    RegimeMap,
    InfectedProportion,
    ManyToOneCheck,
    MomentCheck,
    GaClassify,
    AssumptionProbe,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::MeanCellsRegime => "mean-cells-regime",
            ExperimentKind::SharingComparison => "sharing-comparison",
            ExperimentKind::RegimeMap => "regime-map",
            ExperimentKind::InfectedProportion => "infected-proportion",
            ExperimentKind::ManyToOneCheck => "many-to-one-check",
            ExperimentKind::MomentCheck => "moment-check",
            ExperimentKind::GaClassify => "ga-classify",
            ExperimentKind::AssumptionProbe => "assumption-probe",
        }
    }

    pub fn needs_model(self) -> bool {
        !matches!(self, ExperimentKind::SharingComparison | ExperimentKind::RegimeMap)
    }
}

/// A list of points, or `num` points from `start` to `stop` (geometric when `log`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Points(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        num: usize,
        #[serde(default)]
        log: bool,
    },
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Grid::Points(v) => v.clone(),
            Grid::Range { start, stop, num, log } => {
                if *num < 2 {
                    return vec![*start];
                }
                (0..*num)
                    .map(|i| {
                        let u = i as f64 / (*num - 1) as f64;
                        if *log {
                            (start.ln() + u * (stop.ln() - start.ln())).exp()
                        } else {
                            start + u * (stop - start)
                        }
                    })
                    .collect()
            }
        }
    }

    fn check(&self, field: &str) -> Result<(), CliError> {
        let pts = self.points();
        if pts.is_empty() || pts.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Validation(format!("params.{field}: grid must be non-empty and finite")));
        }
        if let Grid::Range { start, stop, log: true, .. } = self {
            if !(*start > 0.0 && *stop > 0.0) {
                return Err(CliError::Validation(format!("params.{field}: a log grid needs positive bounds")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanCellsParams {
    pub times: Grid,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharingComparisonParams {
    pub r: f64,
    #[serde(default)]
    pub q: f64,
    pub g: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeMapParams {
    pub q_over_r: f64,
    pub g_over_r: Grid,
    pub theta0: Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProportionExpectation {
    /// The infected proportion decreases over the grid.
    Decreasing,
    /// The infected proportion stays above `floor`.
    Persistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfectedProportionParams {
    pub times: Grid,
    pub epsilon: f64,
    pub expect: ProportionExpectation,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManyToOneParams {
    pub time: f64,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub caps: Vec<f64>,
    /// Step of the spine integrator; the model step when absent.
    #[serde(default)]
    pub spine_time_step: Option<f64>,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentCheckParams {
    pub times: Grid,
    #[serde(default = "yes")]
    pub mean: bool,
    #[serde(default)]
    pub second_moment: bool,
    #[serde(default)]
    pub death_factorization: bool,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleProbe {
    pub horizon: f64,
    #[serde(default)]
    pub time_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaParams {
    pub a: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub grid: Grid,
    #[serde(default)]
    pub martingale: Option<MartingaleProbe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeParams {
    pub grid: Grid,
    #[serde(default)]
    pub a_small: Option<f64>,
    #[serde(default)]
    pub a_large: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub tail_fraction: Option<f64>,
}

fn default_max_cells() -> usize {
    200_000
}

fn default_floor() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum Experiment {
    MeanCellsRegime(MeanCellsParams),
    SharingComparison(SharingComparisonParams),
    RegimeMap(RegimeMapParams),
    InfectedProportion(InfectedProportionParams),
    ManyToOneCheck(ManyToOneParams),
    MomentCheck(MomentCheckParams),
    GaClassify(GaParams),
    AssumptionProbe(ProbeParams),
}

impl Experiment {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Experiment::MeanCellsRegime(_) => ExperimentKind::MeanCellsRegime,
            Experiment::SharingComparison(_) => ExperimentKind::SharingComparison,
            Experiment::RegimeMap(_) => ExperimentKind::RegimeMap,
            Experiment::InfectedProportion(_) => ExperimentKind::InfectedProportion,
            Experiment::ManyToOneCheck(_) => ExperimentKind::ManyToOneCheck,
            Experiment::MomentCheck(_) => ExperimentKind::MomentCheck,
            Experiment::GaClassify(_) => ExperimentKind::GaClassify,
            Experiment::AssumptionProbe(_) => ExperimentKind::AssumptionProbe,
        }
    }
}

/// Config file as written by the user.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: ExperimentKind,
    #[serde(default)]
    model: Option<toml::Value>,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_replicas")]
    replicas: usize,
    #[serde(default = "default_k_sigma")]
    k_sigma: f64,
    #[serde(default)]
    threads: usize,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    params: toml::Table,
}

fn default_seed() -> u64 {
    1
}

fn default_replicas() -> usize {
    1000
}

fn default_k_sigma() -> f64 {
    cellinfect::montecarlo::DEFAULT_K_SIGMA
}

/// Fully resolved experiment: everything that determines the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    pub model: Option<ModelSpec>,
    pub seed: u64,
    pub replicas: usize,
    pub k_sigma: f64,
}

/// Settings that do not affect outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub threads: usize,
    pub output: Option<PathBuf>,
}

impl ResolvedConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn kind(&self) -> ExperimentKind {
        self.experiment.kind()
    }

    pub fn model(&self) -> Result<&ModelSpec, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Validation(format!("kind {} requires a model", self.kind().as_str())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.replicas < 2 {
            return Err(CliError::Validation("replicas must be at least 2".into()));
        }
        if !(self.k_sigma > 0.0) {
            return Err(CliError::Validation("k_sigma must be positive".into()));
        }
        if let Some(m) = &self.model {
            m.validate().map_err(|e| CliError::Validation(format!("model: {e}")))?;
        } else if self.kind().needs_model() {
            return Err(CliError::Validation(format!(
                "missing field `model`: kind {} requires a model",
                self.kind().as_str()
            )));
        }
        match &self.experiment {
            Experiment::MeanCellsRegime(p) => check_times(&p.times, "times"),
            Experiment::SharingComparison(p) => {
                p.g.check("g")?;
                if !(p.r > p.q && p.q >= 0.0) {
                    return Err(CliError::Validation("params: need r > q ≥ 0".into()));
                }
                Ok(())
            }
            Experiment::RegimeMap(p) => {
                p.g_over_r.check("g_over_r")?;
                p.theta0.check("theta0")?;
                if p.theta0.points().iter().any(|t| !(*t > 0.0 && *t < 0.5)) {
                    return Err(CliError::Validation("params.theta0: values must lie in (0, 1/2)".into()));
                }
                Ok(())
            }
            Experiment::InfectedProportion(p) => {
                check_times(&p.times, "times")?;
                if !(p.epsilon >= 0.0) {
                    return Err(CliError::Validation("params.epsilon must be ≥ 0".into()));
                }
                Ok(())
            }
            Experiment::ManyToOneCheck(p) => {
                if !(p.time > 0.0) {
                    return Err(CliError::Validation("params.time must be positive".into()));
                }
                if p.thresholds.is_empty() && p.caps.is_empty() {
                    return Err(CliError::Validation("params: give at least one of `thresholds`, `caps`".into()));
                }
                Ok(())
            }
            Experiment::MomentCheck(p) => check_times(&p.times, "times"),
            Experiment::GaClassify(p) => p.grid.check("grid"),
            Experiment::AssumptionProbe(p) => p.grid.check("grid"),
        }
    }
}

fn check_times(g: &Grid, field: &str) -> Result<(), CliError> {
    g.check(field)?;
    let pts = g.points();
    if pts.iter().any(|t| *t < 0.0) || pts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Validation(format!("params.{field}: times must be increasing and ≥ 0")));
    }
    Ok(())
}

fn parse_params<T: serde::de::DeserializeOwned>(params: toml::Table) -> Result<T, CliError> {
    toml::Value::Table(params)
        .try_into()
        .map_err(|e| CliError::Validation(format!("params: {e}")))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

/// Parses a model file.
pub fn load_model(path: &Path) -> Result<ModelSpec, CliError> {
    parse_model(&read(path)?).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_model(text: &str) -> Result<ModelSpec, CliError> {
    toml::from_str(text).map_err(|e| CliError::Validation(format!("model: {e}")))
}

/// Parses config text; relative model paths are resolved against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<(ResolvedConfig, RunSettings), CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
    let model = match raw.model {
        None => None,
        Some(toml::Value::String(p)) => {
            let path = PathBuf::from(p);
            let path = if path.is_relative() { base.join(path) } else { path };
            Some(load_model(&path)?)
        }
        Some(v @ toml::Value::Table(_)) => {
            Some(v.try_into().map_err(|e| CliError::Validation(format!("model: {e}")))?)
        }
        Some(_) => {
            return Err(CliError::Validation(
                "model: expected a file path or an inline table".into(),
            ))
        }
    };
    let experiment = match raw.kind {
        ExperimentKind::MeanCellsRegime => Experiment::MeanCellsRegime(parse_params(raw.params)?),
        ExperimentKind::SharingComparison => Experiment::SharingComparison(parse_params(raw.params)?),
        ExperimentKind::RegimeMap => Experiment::RegimeMap(parse_params(raw.params)?),
        ExperimentKind::InfectedProportion => Experiment::InfectedProportion(parse_params(raw.params)?),
        ExperimentKind::ManyToOneCheck => Experiment::ManyToOneCheck(parse_params(raw.params)?),
        ExperimentKind::MomentCheck => Experiment::MomentCheck(parse_params(raw.params)?),
        ExperimentKind::GaClassify => Experiment::GaClassify(parse_params(raw.params)?),
        ExperimentKind::AssumptionProbe => Experiment::AssumptionProbe(parse_params(raw.params)?),
    };
    let cfg = ResolvedConfig {
        experiment,
        model,
        seed: raw.seed,
        replicas: raw.replicas,
        k_sigma: raw.k_sigma,
    };
    cfg.validate()?;
    let output = raw.output.map(|p| if p.is_relative() { base.join(p) } else { p });
    Ok((cfg, RunSettings { threads: raw.threads, output }))
}

pub fn load_config(path: &Path) -> Result<(ResolvedConfig, RunSettings), CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&read(path)?, base)
}
