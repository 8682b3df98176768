use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{DEFAULT_GAMMA, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::objective::ReconKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Pairwise term off and an unconditional decoder.
    NoDis,
    /// Cluster term off, fusion bypassed, partition by post-hoc k-means.
    NoClu,
    NoDisNoClu,
}

impl Ablation {
    pub fn disentangling(self) -> bool {
        matches!(self, Ablation::None | Ablation::NoClu)
    }

    pub fn clustering(self) -> bool {
        matches!(self, Ablation::None | Ablation::NoDis)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "no_dis" => Ok(Ablation::NoDis),
            "no_clu" => Ok(Ablation::NoClu),
            "no_dis_no_clu" => Ok(Ablation::NoDisNoClu),
            other => Err(Error::invalid(format!("unknown ablation {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconChoice {
    /// Bernoulli for data in `[0, 1]`, squared error otherwise.
    #[default]
    Auto,
    Squared,
    Bernoulli,
}

impl ReconChoice {
    pub fn resolve(self, unit_range: bool) -> ReconKind {
        match self {
            ReconChoice::Auto if unit_range => ReconKind::Bernoulli,
            ReconChoice::Auto | ReconChoice::Squared => ReconKind::Squared,
            ReconChoice::Bernoulli => ReconKind::Bernoulli,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub tau: f64,
    pub gamma: f64,
    pub warmup_epochs: usize,
    pub recon_kind: ReconChoice,
    pub seed: u64,
    pub ablation: Ablation,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub log_every: usize,
    pub kmeans_restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta1: 1.0,
            eta2: 0.1,
            learning_rate: 5e-4,
            epochs: 1000,
            batch_size: 256,
            latent_dim: 10,
            hidden: vec![500, 500, 2000],
            tau: DEFAULT_TAU,
            gamma: DEFAULT_GAMMA,
            warmup_epochs: 20,
            recon_kind: ReconChoice::Auto,
            seed: 0,
            ablation: Ablation::None,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            log_every: 10,
            kmeans_restarts: 10,
        }
    }
}

impl TrainConfig {
    /// Reads a flat `key = value` TOML document; unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: TrainConfig =
            toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `key=value` overrides with the same syntax as the file.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::invalid(e.to_string()))?;
        for (key, raw) in overrides {
            let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.clone()));
            table.insert(key.clone(), value);
        }
        let config: TrainConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("tau", self.tau),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("latent_dim", self.latent_dim),
            ("log_every", self.log_every),
            ("kmeans_restarts", self.kmeans_restarts),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        Ok(())
    }

    /// `eta1` after the ablation is applied.
    pub fn effective_eta1(&self) -> f64 {
        if self.ablation.disentangling() {
            self.eta1
        } else {
            0.0
        }
    }

    pub fn effective_eta2(&self) -> f64 {
        if self.ablation.clustering() {
            self.eta2
        } else {
            0.0
        }
    }
}
