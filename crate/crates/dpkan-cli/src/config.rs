//! Run-configuration files: the on-disk schema, loading, and translation into
//! library types.
//!
//! A run file is structured text with nested sections (`[data]`, `[model]`,
//! `[train]`, and optionally `[privacy]` and `[diagnostics]`); the same shape
//! is accepted as a JSON object when the file name ends in `.json`. Unknown
//! keys are rejected so a typo cannot silently fall back to a default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use dpkan::datagen::{GenSpec, MarginMode};
use dpkan::model::{Activation, KanModel};
use dpkan::objective::Dataset;
use dpkan::optimizer::TrainConfig;
use dpkan::privacy::{self, PrivacyBudget};
use dpkan::rng;

/// A command failure, classified by exit code: configuration problems exit
/// with 1, runtime failures with 2, and usage mistakes with 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Usage(String),
}

impl CliError {
    /// Process exit code for this class of failure.
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Usage(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime: {msg}"),
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Top-level run file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    #[serde(default)]
    pub privacy: Option<PrivacySection>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

/// Where the training set comes from: a synthetic generator or a CSV file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DataSection {
    File(FileData),
    Generated(GeneratedData),
}

/// A `[data]` section pointing at an existing dataset CSV.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileData {
    pub csv: PathBuf,
}

/// A `[data]` section describing the synthetic generator.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedData {
    pub n: usize,
    pub d: usize,
    pub mode: String,
    pub gap: f64,
    pub seed: u64,
}

/// Network shape and activation; the input dimension comes from the data.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub m: usize,
    pub p: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    pub activation: String,
}

fn default_degree() -> usize {
    3
}

/// Optimizer loop parameters. `c_clip` and `r_star` accept a number, `"inf"`,
/// or `"auto"`; `auto` resolves the clip threshold to the high-probability
/// gradient bound and the radius to `c_r * (ln T + sqrt(ln(n/delta))) /
/// gamma_hat` with `gamma_hat` the estimated separation margin.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub eta: f64,
    pub steps: usize,
    pub batch: usize,
    #[serde(default = "unbounded")]
    pub c_clip: BoundSpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "unbounded")]
    pub r_star: BoundSpec,
    #[serde(default = "default_c_r")]
    pub c_r: f64,
    pub seed: u64,
    #[serde(default)]
    pub track_auxiliary: bool,
    #[serde(default)]
    pub holdout_size: usize,
}

fn default_c_r() -> f64 {
    10.0
}

/// Privacy target; when present, `kappa` is calibrated from it and the
/// `[train]` section must leave `kappa` unset.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    pub epsilon: f64,
    pub delta: f64,
    pub mechanism: String,
    #[serde(default = "default_split")]
    pub split: f64,
}

fn default_split() -> f64 {
    0.5
}

/// Knobs for the `diagnose` suites.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_diag_delta")]
    pub delta: f64,
    #[serde(default = "default_stability_indices")]
    pub stability_indices: usize,
    #[serde(default = "default_tail_dim")]
    pub tail_dim: usize,
    #[serde(default = "default_tail_horizon")]
    pub tail_horizon: usize,
    #[serde(default = "default_tail_runs")]
    pub tail_runs: usize,
    #[serde(default = "default_tail_delta")]
    pub tail_delta: f64,
}

fn default_diag_delta() -> f64 {
    0.05
}

fn default_stability_indices() -> usize {
    4
}

fn default_tail_dim() -> usize {
    8
}

fn default_tail_horizon() -> usize {
    16
}

fn default_tail_runs() -> usize {
    2000
}

fn default_tail_delta() -> f64 {
    0.5
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            delta: default_diag_delta(),
            stability_indices: default_stability_indices(),
            tail_dim: default_tail_dim(),
            tail_horizon: default_tail_horizon(),
            tail_runs: default_tail_runs(),
            tail_delta: default_tail_delta(),
        }
    }
}

/// A bound field: a plain number, `"inf"`, or `"auto"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Number(f64),
    Named(String),
}

fn unbounded() -> BoundSpec {
    BoundSpec::Number(f64::INFINITY)
}

/// What a named bound resolved to.
#[derive(Debug)]
pub enum Bound {
    Value(f64),
    Auto,
}

impl BoundSpec {
    /// Resolves the parsed form, leaving `"auto"` for the caller to fill in.
    pub fn resolve(&self, field: &str) -> Result<Bound, CliError> {
        match self {
            BoundSpec::Number(x) => {
                if x.is_nan() {
                    return Err(CliError::Config(format!("{field} must not be NaN")));
                }
                Ok(Bound::Value(*x))
            }
            BoundSpec::Named(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" => Ok(Bound::Value(f64::INFINITY)),
                "auto" => Ok(Bound::Auto),
                other => Err(CliError::Config(format!(
                    "{field} must be a number, \"inf\", or \"auto\", got \"{other}\""
                ))),
            },
        }
    }
}

/// Reads and parses a run file, choosing the JSON parser when the extension
/// is `.json` and the key=value section parser otherwise.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|err| {
        CliError::Config(format!("cannot read config file {}: {err}", path.display()))
    })?;
    let is_json = path
        .extension()
        .map(|ext| ext.eq_ignore_ascii_case("json"))
        .unwrap_or(false);
    if is_json {
        serde_json::from_str(&text).map_err(|err| {
            CliError::Config(format!("invalid JSON config {}: {err}", path.display()))
        })
    } else {
        toml::from_str(&text).map_err(|err| {
            CliError::Config(format!("invalid config {}: {err}", path.display()))
        })
    }
}

impl DataSection {
    /// The generator spec, when the data is synthetic.
    pub fn gen_spec(&self) -> Result<Option<GenSpec>, CliError> {
        match self {
            DataSection::File(_) => Ok(None),
            DataSection::Generated(gen) => {
                let mode = MarginMode::from_str(&gen.mode).map_err(cfg_err)?;
                Ok(Some(GenSpec {
                    n: gen.n,
                    d: gen.d,
                    mode,
                    gap: gen.gap,
                    seed: gen.seed,
                }))
            }
        }
    }
}

/// Everything a run needs, assembled and validated from the config file.
#[derive(Debug)]
pub struct PreparedRun {
    pub data: Dataset,
    pub gen: Option<GenSpec>,
    pub model: KanModel,
    pub train: TrainConfig,
    pub holdout: Option<Dataset>,
    /// Estimated separation margin, when the radius recipe needed it.
    pub gamma_hat: Option<f64>,
}

/// Builds the dataset, model, and validated `TrainConfig` for a run.
///
/// `seed_override` replaces the `[train]` seed when the `--seed` flag is
/// given; the data generator keeps its own seed so the dataset stays fixed
/// across reruns of the same config.
pub fn prepare_run(cfg: &RunConfig, seed_override: Option<u64>) -> Result<PreparedRun, CliError> {
    let gen = cfg.data.gen_spec()?;
    let data = match &cfg.data {
        DataSection::File(file) => Dataset::from_path(&file.csv).map_err(cfg_err)?,
        DataSection::Generated(_) => {
            dpkan::datagen::generate(gen.as_ref().expect("generated section has a spec"))
                .map_err(cfg_err)?
        }
    };
    let run_seed = seed_override.unwrap_or(cfg.train.seed);
    let activation = Activation::from_str(&cfg.model.activation).map_err(cfg_err)?;
    let model = KanModel::init(
        cfg.model.m,
        data.dim(),
        cfg.model.p,
        cfg.model.degree,
        activation,
        run_seed,
    )
    .map_err(cfg_err)?;

    let c_clip = match cfg.train.c_clip.resolve("train.c_clip")? {
        Bound::Value(x) => x,
        Bound::Auto => model.grad_norm_bound(cfg.diagnostics.delta),
    };
    let mut gamma_hat = None;
    let r_star = match cfg.train.r_star.resolve("train.r_star")? {
        Bound::Value(x) => x,
        Bound::Auto => {
            let report = dpkan::diagnostics::estimate_margin(&model, &data).map_err(cfg_err)?;
            if !(report.gamma_hat > 0.0) {
                return Err(CliError::Config(format!(
                    "train.r_star = \"auto\" needs a positive margin estimate, got {}",
                    report.gamma_hat
                )));
            }
            let t = cfg.train.steps as f64;
            let ratio = data.len() as f64 / cfg.diagnostics.delta;
            let r = cfg.train.c_r * (t.ln() + ratio.ln().sqrt()) / report.gamma_hat;
            gamma_hat = Some(report.gamma_hat);
            r
        }
    };

    let kappa = match &cfg.privacy {
        None => cfg.train.kappa,
        Some(privacy) => {
            if cfg.train.kappa != 0.0 {
                return Err(CliError::Config(
                    "train.kappa is set directly and a [privacy] section is present; \
                     drop one of the two"
                        .to_string(),
                ));
            }
            calibrate_from_section(privacy, data.len(), cfg.train.batch, cfg.train.steps, cfg.train.lambda)?
                .kappa
        }
    };

    let train = TrainConfig {
        eta: cfg.train.eta,
        steps: cfg.train.steps,
        batch: cfg.train.batch,
        c_clip,
        lambda: cfg.train.lambda,
        kappa,
        r_star,
        seed: run_seed,
        track_auxiliary: cfg.train.track_auxiliary,
        holdout_size: cfg.train.holdout_size,
    };
    train.validate(data.len()).map_err(cfg_err)?;

    let holdout = if cfg.train.holdout_size == 0 {
        None
    } else {
        let spec = gen.as_ref().ok_or_else(|| {
            CliError::Config(
                "train.holdout_size > 0 needs a [data] generator section; \
                 a csv dataset has no source to draw fresh examples from"
                    .to_string(),
            )
        })?;
        Some(
            dpkan::datagen::generate_auxiliary(spec, cfg.train.holdout_size, rng::HOLDOUT)
                .map_err(cfg_err)?,
        )
    };

    Ok(PreparedRun {
        data,
        gen,
        model,
        train,
        holdout,
        gamma_hat,
    })
}

/// Runs the calibration named by a `[privacy]` section.
pub fn calibrate_from_section(
    section: &PrivacySection,
    n: usize,
    batch: usize,
    steps: usize,
    lambda: f64,
) -> Result<dpkan::privacy::Calibration, CliError> {
    let budget = PrivacyBudget {
        epsilon: section.epsilon,
        delta: section.delta,
        n,
        batch,
        steps,
        lambda,
    };
    match section.mechanism.as_str() {
        "independent" => {
            if lambda != 0.0 {
                return Err(CliError::Config(format!(
                    "the independent mechanism has no correlation parameter; \
                     set train.lambda = 0 (got {lambda})"
                )));
            }
            privacy::calibrate_independent(&budget).map_err(cfg_err)
        }
        "correlated" => {
            privacy::calibrate_correlated_split(&budget, section.split).map_err(cfg_err)
        }
        other => Err(CliError::Usage(format!(
            "unknown mechanism \"{other}\"; expected \"independent\" or \"correlated\""
        ))),
    }
}

/// Formats a possibly-infinite bound for reports.
pub fn fmt_bound(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x}")
    }
}

fn cfg_err<E: fmt::Display>(err: E) -> CliError {
    CliError::Config(err.to_string())
}
