//! Experiment configuration: defaults, a flat `key = value` config file
//! format (versioned via `config_version`), and `--key=value` overrides.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::federation::{Optimizer, TrainConfig};
use crate::gsm::{GsmConfig, SigmaEstimation};
use crate::models::{ModelKind, ModelSpec};
use crate::pruning::PruneSchedule;

pub const CONFIG_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    Iid,
    NoniidShards,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Blobs,
    File,
}

/// Every knob of one experiment, flat so each field maps 1:1 to a config
/// key. Composites for the other modules are built by the accessors below.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub num_clients: usize,
    pub rounds: usize,
    pub seed: u64,
    pub output_path: PathBuf,
    pub partition: PartitionScheme,

    pub model_kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,

    pub data_source: DataSource,
    pub samples_per_class: usize,
    pub blob_spread: f64,
    pub data_file: Option<PathBuf>,

    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub use_fedprox: bool,
    pub prox_mu: f64,

    pub warmup_rounds: usize,
    pub target_ratio: f64,
    pub max_prunes_per_round: usize,

    pub gsm_sigma_estimation: SigmaEstimation,
    pub gsm_sigma_w_sq: f64,
    pub gsm_epsilon: f64,
    pub gsm_max_iters: usize,
    pub gsm_rel_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let gsm = GsmConfig::default();
        ExperimentConfig {
            num_clients: 20,
            rounds: 60,
            seed: 7,
            output_path: PathBuf::from("metrics"),
            partition: PartitionScheme::NoniidShards,
            model_kind: ModelKind::LinearSoftmax,
            input_dim: 8,
            num_classes: 4,
            data_source: DataSource::Blobs,
            samples_per_class: 500,
            blob_spread: 1.0,
            data_file: None,
            local_epochs: 5,
            batch_size: 32,
            learning_rate: 0.05,
            use_fedprox: false,
            prox_mu: 0.0,
            warmup_rounds: 20,
            target_ratio: 0.3,
            max_prunes_per_round: 1,
            gsm_sigma_estimation: gsm.sigma_estimation,
            gsm_sigma_w_sq: gsm.sigma_w_sq,
            gsm_epsilon: gsm.epsilon,
            gsm_max_iters: gsm.max_iters,
            gsm_rel_tol: gsm.rel_tol,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {value:?}")))
}

impl ExperimentConfig {
    /// Reads a config file and applies it over the defaults. The file must
    /// carry `config_version = 1`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::default();
        let mut version: Option<u64> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key == "config_version" {
                version = Some(parse(key, value)?);
            } else {
                cfg.set(key, value)?;
            }
        }
        match version {
            Some(CONFIG_VERSION) => Ok(cfg),
            Some(v) => Err(Error::InvalidConfig(format!(
                "unsupported config_version {v}, expected {CONFIG_VERSION}"
            ))),
            None => Err(Error::InvalidConfig("missing config_version".into())),
        }
    }

    /// Applies `--key=value` style overrides on top of the current values.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for raw in overrides {
            let stripped = raw.strip_prefix("--").ok_or_else(|| {
                Error::InvalidConfig(format!("override {raw:?} must look like --key=value"))
            })?;
            let (key, value) = stripped.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("override {raw:?} must look like --key=value"))
            })?;
            let key = key.trim();
            if key == "config_version" {
                let v: u64 = parse(key, value.trim())?;
                if v != CONFIG_VERSION {
                    return Err(Error::InvalidConfig(format!(
                        "unsupported config_version {v}, expected {CONFIG_VERSION}"
                    )));
                }
                continue;
            }
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "num_clients" => self.num_clients = parse(key, value)?,
            "rounds" => self.rounds = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output_path" => self.output_path = PathBuf::from(value),
            "partition" => {
                self.partition = match value {
                    "iid" => PartitionScheme::Iid,
                    "noniid_shards" => PartitionScheme::NoniidShards,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "partition must be iid or noniid_shards, got {value:?}"
                        )))
                    }
                }
            }
            "model_kind" => {
                self.model_kind = match value {
                    "linear_softmax" => ModelKind::LinearSoftmax,
                    "mlp_one_hidden" => {
                        let hidden_dim = match self.model_kind {
                            ModelKind::MlpOneHidden { hidden_dim } => hidden_dim,
                            ModelKind::LinearSoftmax => 16,
                        };
                        ModelKind::MlpOneHidden { hidden_dim }
                    }
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "model_kind must be linear_softmax or mlp_one_hidden, got {value:?}"
                        )))
                    }
                }
            }
            "hidden_dim" => {
                let hidden_dim = parse(key, value)?;
                self.model_kind = ModelKind::MlpOneHidden { hidden_dim };
            }
            "input_dim" => self.input_dim = parse(key, value)?,
            "num_classes" => self.num_classes = parse(key, value)?,
            "data_source" => {
                self.data_source = match value {
                    "blobs" => DataSource::Blobs,
                    "file" => DataSource::File,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "data_source must be blobs or file, got {value:?}"
                        )))
                    }
                }
            }
            "samples_per_class" => self.samples_per_class = parse(key, value)?,
            "blob_spread" => self.blob_spread = parse(key, value)?,
            "data_file" => self.data_file = Some(PathBuf::from(value)),
            "local_epochs" => self.local_epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "optimizer" => {
                self.use_fedprox = match value {
                    "fedavg" => false,
                    "fedprox" => true,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "optimizer must be fedavg or fedprox, got {value:?}"
                        )))
                    }
                }
            }
            "prox_mu" => self.prox_mu = parse(key, value)?,
            "warmup_rounds" => self.warmup_rounds = parse(key, value)?,
            "target_ratio" => self.target_ratio = parse(key, value)?,
            "max_prunes_per_round" => self.max_prunes_per_round = parse(key, value)?,
            "gsm_sigma_estimation" => {
                self.gsm_sigma_estimation = match value {
                    "fixed" => SigmaEstimation::Fixed,
                    "robust_mad" => SigmaEstimation::RobustMad,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "gsm_sigma_estimation must be fixed or robust_mad, got {value:?}"
                        )))
                    }
                }
            }
            "gsm_sigma_w_sq" => self.gsm_sigma_w_sq = parse(key, value)?,
            "gsm_epsilon" => self.gsm_epsilon = parse(key, value)?,
            "gsm_max_iters" => self.gsm_max_iters = parse(key, value)?,
            "gsm_rel_tol" => self.gsm_rel_tol = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model_kind,
            input_dim: self.input_dim,
            num_classes: self.num_classes,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: if self.use_fedprox {
                Optimizer::FedProx { mu: self.prox_mu }
            } else {
                Optimizer::FedAvg
            },
        }
    }

    pub fn gsm_config(&self) -> GsmConfig {
        GsmConfig {
            sigma_w_sq: self.gsm_sigma_w_sq,
            epsilon: self.gsm_epsilon,
            max_iters: self.gsm_max_iters,
            rel_tol: self.gsm_rel_tol,
            sigma_estimation: self.gsm_sigma_estimation,
        }
    }

    pub fn prune_schedule(&self) -> Result<PruneSchedule> {
        PruneSchedule::new(
            self.num_clients,
            self.target_ratio,
            self.warmup_rounds,
            self.max_prunes_per_round,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::InvalidConfig(
                "num_clients must be at least 1".into(),
            ));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be at least 1".into()));
        }
        self.model_spec().validate()?;
        self.train_config().validate()?;
        if !self.use_fedprox && self.prox_mu != 0.0 {
            return Err(Error::InvalidConfig(
                "prox_mu is set but optimizer is fedavg".into(),
            ));
        }
        self.prune_schedule()?;
        self.gsm_config().validate()?;
        match self.partition {
            PartitionScheme::NoniidShards if self.num_clients != 20 => {
                return Err(Error::InvalidConfig(
                    "noniid_shards requires exactly 20 clients".into(),
                ));
            }
            _ => {}
        }
        match self.data_source {
            DataSource::Blobs => {
                if self.samples_per_class == 0 {
                    return Err(Error::InvalidConfig(
                        "samples_per_class must be at least 1".into(),
                    ));
                }
                if !self.blob_spread.is_finite() || self.blob_spread <= 0.0 {
                    return Err(Error::InvalidConfig("blob_spread must be positive".into()));
                }
            }
            DataSource::File => {
                if self.data_file.is_none() {
                    return Err(Error::InvalidConfig(
                        "data_source = file requires data_file".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}
