//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors so a
//! typo never silently falls back to a default.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::adam::AdamConfig;
use super::trainer::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::temporal::EncoderVariant;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Corpus directory written by `preprocess`.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dim: usize,
    pub layers: usize,
    pub tau: f64,
    pub tn_variant: String,
    pub te_variant: String,
    pub tn_buckets: usize,
    pub te_buckets: usize,
    pub max_len: usize,
    pub tie_gates: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub lr_decay_epochs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(1);
        let a = AdamConfig::default();
        let t = TrainConfig::default();
        RunConfig {
            data: None,
            out: None,
            dim: m.dim,
            layers: m.layers,
            tau: m.tau,
            tn_variant: m.tn.name().to_string(),
            te_variant: m.te.name().to_string(),
            tn_buckets: m.tn.buckets(),
            te_buckets: m.te.buckets(),
            max_len: m.max_len,
            tie_gates: m.tie_direction_gates,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            weight_decay: a.weight_decay,
            lr_decay: a.decay_factor,
            lr_decay_epochs: a.decay_epochs,
        }
    }
}

pub const KEYS: &[&str] = &[
    "data",
    "out",
    "dim",
    "layers",
    "tau",
    "tn_variant",
    "te_variant",
    "tn_buckets",
    "te_buckets",
    "max_len",
    "tie_gates",
    "batch_size",
    "epochs",
    "seed",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "lr_decay",
    "lr_decay_epochs",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "data" => self.data = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "dim" => self.dim = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "tn_variant" => self.tn_variant = v.to_string(),
            "te_variant" => self.te_variant = v.to_string(),
            "tn_buckets" => self.tn_buckets = parse(key, v)?,
            "te_buckets" => self.te_buckets = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "tie_gates" => self.tie_gates = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "eps" => self.eps = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "lr_decay" => self.lr_decay = parse(key, v)?,
            "lr_decay_epochs" => self.lr_decay_epochs = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: n + 1,
                detail: format!("expected key = value, found {line:?}"),
            })?;
            config.set(k, v).map_err(|e| Error::Parse {
                line: n + 1,
                detail: e.to_string(),
            })?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse_str(&text)
    }

    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = String::new();
        for key in KEYS {
            let value = match *key {
                "data" => path(&self.data),
                "out" => path(&self.out),
                "dim" => Some(self.dim.to_string()),
                "layers" => Some(self.layers.to_string()),
                "tau" => Some(self.tau.to_string()),
                "tn_variant" => Some(self.tn_variant.clone()),
                "te_variant" => Some(self.te_variant.clone()),
                "tn_buckets" => Some(self.tn_buckets.to_string()),
                "te_buckets" => Some(self.te_buckets.to_string()),
                "max_len" => Some(self.max_len.to_string()),
                "tie_gates" => Some(self.tie_gates.to_string()),
                "batch_size" => Some(self.batch_size.to_string()),
                "epochs" => Some(self.epochs.to_string()),
                "seed" => Some(self.seed.to_string()),
                "lr" => Some(self.lr.to_string()),
                "beta1" => Some(self.beta1.to_string()),
                "beta2" => Some(self.beta2.to_string()),
                "eps" => Some(self.eps.to_string()),
                "weight_decay" => Some(self.weight_decay.to_string()),
                "lr_decay" => Some(self.lr_decay.to_string()),
                "lr_decay_epochs" => Some(self.lr_decay_epochs.to_string()),
                _ => unreachable!(),
            };
            if let Some(v) = value {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        out
    }

    pub fn variants(&self) -> Result<(EncoderVariant, EncoderVariant)> {
        Ok((
            EncoderVariant::parse(&self.tn_variant, self.tn_buckets)?,
            EncoderVariant::parse(&self.te_variant, self.te_buckets)?,
        ))
    }

    pub fn model_config(&self, n_items: usize) -> Result<ModelConfig> {
        let (tn, te) = self.variants()?;
        let config = ModelConfig {
            dim: self.dim,
            layers: self.layers,
            tau: self.tau,
            n_items,
            tn,
            te,
            max_len: self.max_len,
            tie_direction_gates: self.tie_gates,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("lr", self.lr),
            ("eps", self.eps),
            ("lr_decay", self.lr_decay),
            ("lr_decay_epochs", self.lr_decay_epochs as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.weight_decay,
                decay_factor: self.lr_decay,
                decay_epochs: self.lr_decay_epochs,
            },
        })
    }
}
