use std::collections::BTreeMap;

use thiserror::Error;

use super::adam::AdamConfig;
use super::mining::CurriculumSchedule;
use super::split::SplitSpec;
use crate::models::Architecture;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown training key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: `{value}`")]
    BadValue { key: String, value: String },
}

/// Every training knob, settable from flat `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub max_epochs: usize,
    pub patience: usize,
    pub negatives: usize,
    pub max_hard_fraction: f64,
    /// `None` ramps over half of `max_epochs`.
    pub ramp_epochs: Option<usize>,
    pub overlap_boost: f64,
    /// Items per optimizer step.
    pub batch_size: usize,
    /// Training items scored each epoch for the train-MRR diagnostic.
    pub train_eval_items: usize,
    pub architecture: Architecture,
    pub split: SplitSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            max_epochs: 100,
            patience: 10,
            negatives: 16,
            max_hard_fraction: 0.8,
            ramp_epochs: None,
            overlap_boost: 2.0,
            batch_size: 16,
            train_eval_items: 256,
            architecture: Architecture::default(),
            split: SplitSpec::default(),
        }
    }
}

pub const TRAIN_KEYS: [&str; 21] = [
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "clip_norm",
    "epochs",
    "patience",
    "negatives",
    "hard_fraction_max",
    "ramp_epochs",
    "overlap_boost",
    "batch_size",
    "train_eval_items",
    "cost_hidden",
    "semantic_hidden",
    "discriminative_hidden",
    "s1_hidden",
    "semantic_norm",
    "test_fraction",
    "n_folds",
    "fold_index",
];

fn dims(v: &[usize]) -> String {
    v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn curriculum(&self) -> CurriculumSchedule {
        CurriculumSchedule {
            negatives: self.negatives,
            max_hard_fraction: self.max_hard_fraction,
            ramp_epochs: self.ramp_epochs.unwrap_or(self.max_epochs / 2),
            overlap_boost: self.overlap_boost,
        }
    }

    pub fn is_key(key: &str) -> bool {
        TRAIN_KEYS.contains(&key)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        let f = || value.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
        let u = || value.parse::<usize>().map_err(|_| bad());
        let d = || -> Result<Vec<usize>, ConfigError> {
            if value.trim().is_empty() {
                return Ok(Vec::new());
            }
            let v: Vec<usize> = value.split(',').map(|x| x.trim().parse::<usize>()).collect::<Result<_, _>>().map_err(|_| bad())?;
            if v.contains(&0) {
                return Err(bad());
            }
            Ok(v)
        };
        match key {
            "lr" => self.adam.lr = f()?,
            "beta1" => self.adam.beta1 = f()?,
            "beta2" => self.adam.beta2 = f()?,
            "adam_eps" => self.adam.eps = f()?,
            "clip_norm" => self.adam.clip_norm = f()?,
            "epochs" => self.max_epochs = u()?,
            "patience" => self.patience = u()?,
            "negatives" => self.negatives = u()?.max(1),
            "hard_fraction_max" => {
                let x = f()?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(bad());
                }
                self.max_hard_fraction = x;
            }
            "ramp_epochs" => self.ramp_epochs = if value == "auto" { None } else { Some(u()?) },
            "overlap_boost" => self.overlap_boost = f()?,
            "batch_size" => self.batch_size = u()?.max(1),
            "train_eval_items" => self.train_eval_items = u()?,
            "cost_hidden" => self.architecture.cost_hidden = d()?,
            "semantic_hidden" => self.architecture.semantic_hidden = d()?,
            "discriminative_hidden" => self.architecture.discriminative_hidden = d()?,
            "s1_hidden" => self.architecture.s1_hidden = d()?,
            "semantic_norm" => self.architecture.semantic_norm = value.parse().map_err(|_| bad())?,
            "test_fraction" => self.split.test_fraction = f()?,
            "n_folds" => self.split.n_folds = u()?.max(1),
            "fold_index" => self.split.fold_index = u()?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Every effective value, including defaults.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let a = &self.adam;
        let arch = &self.architecture;
        let ramp = self.ramp_epochs.unwrap_or(self.max_epochs / 2);
        [
            ("lr", a.lr.to_string()),
            ("beta1", a.beta1.to_string()),
            ("beta2", a.beta2.to_string()),
            ("adam_eps", a.eps.to_string()),
            ("clip_norm", a.clip_norm.to_string()),
            ("epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("negatives", self.negatives.to_string()),
            ("hard_fraction_max", self.max_hard_fraction.to_string()),
            ("ramp_epochs", ramp.to_string()),
            ("overlap_boost", self.overlap_boost.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("train_eval_items", self.train_eval_items.to_string()),
            ("cost_hidden", dims(&arch.cost_hidden)),
            ("semantic_hidden", dims(&arch.semantic_hidden)),
            ("discriminative_hidden", dims(&arch.discriminative_hidden)),
            ("s1_hidden", dims(&arch.s1_hidden)),
            ("semantic_norm", arch.semantic_norm.to_string()),
            ("test_fraction", self.split.test_fraction.to_string()),
            ("n_folds", self.split.n_folds.to_string()),
            ("fold_index", self.split.fold_index.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Ordered `(key, value)` pairs from `key = value` text.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}
