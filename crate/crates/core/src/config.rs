//! Flat run configuration, loadable from TOML with per-key overrides.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::DatasetManifest;
use crate::elbo::LossWeights;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Switches, TopicSource};
use crate::numerics::Adam;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory.
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub epochs: u64,
    /// Dialogues per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub val_fraction: f64,
    pub w_cls: f64,
    pub w_recon: f64,
    pub w_kl: f64,
    pub s_dim: usize,
    pub v_dim: usize,
    pub z_dim: usize,
    pub p_dim: usize,
    pub f_dim: usize,
    pub topic_hidden: usize,
    pub dec_hidden: usize,
    pub cls_hidden: usize,
    pub topic: TopicSource,
    pub attributes: bool,
    pub disentangle: bool,
    pub literal_z_posterior: bool,
    /// Time-batch window for evaluation reports.
    pub time_batch: usize,
    pub time_batch_max: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let adam = Adam::default();
        Self {
            data: None,
            seed: 0,
            epochs: 80,
            batch_size: 8,
            lr: adam.lr,
            weight_decay: adam.weight_decay,
            val_fraction: 0.1,
            w_cls: 1.0,
            w_recon: 1.0,
            w_kl: 1.0,
            s_dim: m.s_dim,
            v_dim: m.v_dim,
            z_dim: m.z_dim,
            p_dim: m.p_dim,
            f_dim: m.f_dim,
            topic_hidden: m.topic_hidden,
            dec_hidden: m.dec_hidden,
            cls_hidden: m.cls_hidden,
            topic: m.switches.topic,
            attributes: m.switches.attributes,
            disentangle: m.switches.disentangle,
            literal_z_posterior: false,
            time_batch: 5,
            time_batch_max: 40,
        }
    }
}

impl RunConfig {
    /// Small dimensions suited to the synthetic corpus.
    pub fn synthetic() -> Self {
        Self {
            s_dim: 8,
            v_dim: 8,
            z_dim: 8,
            p_dim: 8,
            f_dim: 8,
            topic_hidden: 16,
            dec_hidden: 32,
            cls_hidden: 16,
            lr: 0.003,
            time_batch: 1,
            time_batch_max: 12,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "synthetic" => Ok(Self::synthetic()),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_toml(path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn apply_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        apply_overrides(self, overrides)
    }

    pub fn switches(&self) -> Switches {
        Switches {
            topic: self.topic,
            attributes: self.attributes,
            disentangle: self.disentangle,
        }
    }

    pub fn set_switches(&mut self, s: Switches) {
        self.topic = s.topic;
        self.attributes = s.attributes;
        self.disentangle = s.disentangle;
    }

    pub fn loss_weights(&self) -> Result<LossWeights> {
        LossWeights::new(self.w_cls, self.w_recon, self.w_kl)
    }

    pub fn optimizer(&self) -> Adam {
        Adam {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..Adam::default()
        }
    }

    /// Model configuration for data with the given feature dimensions.
    pub fn model_config(&self, u_dim: usize, f_raw_dim: usize, n_classes: usize) -> ModelConfig {
        ModelConfig {
            u_dim,
            f_raw_dim,
            f_dim: self.f_dim,
            topic_hidden: self.topic_hidden,
            p_dim: self.p_dim,
            s_dim: self.s_dim,
            v_dim: self.v_dim,
            z_dim: self.z_dim,
            dec_hidden: self.dec_hidden,
            cls_hidden: self.cls_hidden,
            n_classes,
            switches: self.switches(),
            literal_z_posterior: self.literal_z_posterior,
        }
    }

    pub fn model_config_for(&self, manifest: &DatasetManifest) -> ModelConfig {
        self.model_config(manifest.u_dim, manifest.f_raw_dim, manifest.n_classes)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0, 1)".into()));
        }
        if self.time_batch == 0 {
            return Err(Error::Config("time_batch must be at least 1".into()));
        }
        self.loss_weights()?;
        self.model_config(1, 1, 2).validate()
    }
}

/// Reads a TOML file into any configuration type.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e
            .span()
            .map_or(0, |s| text[..s.start].lines().count().max(1)),
        msg: e.message().to_string(),
    })
}

/// Applies `key=value` overrides, parsing each value as TOML and falling
/// back to a bare string.
pub fn apply_overrides<T, S>(value: &T, overrides: &[S]) -> Result<T>
where
    T: Serialize + DeserializeOwned,
    S: AsRef<str>,
{
    let mut table = toml::Table::try_from(value).map_err(|e| Error::Config(e.to_string()))?;
    for item in overrides {
        let item = item.as_ref();
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
        let raw = raw.trim();
        let parsed = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        table.insert(key.trim().to_string(), parsed);
    }
    let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
    toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}
