//! Run configuration: flat `key = value` text plus `--set` overrides.
//!
//! Pipeline keys are handled here; every training key is forwarded to
//! [`TrainConfig`]. Relative input paths resolve against the data root:
//! `data_root` in the file, else `MORPHORANK_DATA`, else the directory of
//! the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use morphorank_core::candidates::GateConfig;
use morphorank_core::lexicon::Resolution;
use morphorank_core::training::{parse_key_values, TrainConfig};

use crate::error::UserError;

pub const DATA_ENV: &str = "MORPHORANK_DATA";

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSpec {
    Table(PathBuf),
    Pseudo { dim: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySource {
    pub name: String,
    pub path: PathBuf,
    pub resolution: Resolution,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub output_dir: PathBuf,
    pub inventory: Option<PathBuf>,
    pub frequencies: Vec<FrequencySource>,
    pub pronunciations: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub embeddings: Option<EmbeddingSpec>,
    pub year_tables: BTreeMap<i32, PathBuf>,
    pub gate: GateConfig,
    pub distributional_k: usize,
    /// Candidates sampled per test item, gold included.
    pub eval_candidates: usize,
    pub listing_depth: usize,
    pub repeats: usize,
    pub temporal_first: i32,
    pub temporal_last: i32,
    pub temporal_step: i32,
    pub train: TrainConfig,
    /// Raw value of every key as last set, for the run digest.
    raw: BTreeMap<String, String>,
}

fn bad(key: &str, value: &str) -> UserError {
    UserError(format!("bad value for `{key}`: `{value}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, UserError> {
    value.trim().parse().map_err(|_| bad(key, value))
}

impl RunConfig {
    fn empty(data_root: PathBuf) -> Self {
        Self {
            data_root,
            output_dir: PathBuf::from("runs"),
            inventory: None,
            frequencies: Vec::new(),
            pronunciations: None,
            dataset: None,
            seeds: None,
            embeddings: None,
            year_tables: BTreeMap::new(),
            gate: GateConfig::default(),
            distributional_k: 50,
            eval_candidates: 1024,
            listing_depth: morphorank_core::eval::DEFAULT_LISTING_DEPTH,
            repeats: 3,
            temporal_first: 1830,
            temporal_last: 1910,
            temporal_step: 10,
            train: TrainConfig::default(),
            raw: BTreeMap::new(),
        }
    }

    /// Reads `path`, then applies `overrides` (`key=value`) in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, UserError> {
        let text = fs::read_to_string(path).map_err(|e| UserError(format!("cannot read config {}: {e}", path.display())))?;
        let mut pairs = parse_key_values(&text).map_err(|e| UserError(format!("{}: {e}", path.display())))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| UserError(format!("--set expects key=value, got `{o}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let root = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "data_root")
            .map(|(_, v)| base.join(v))
            .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
            .unwrap_or(base);
        let mut cfg = Self::empty(root);
        let mut resolutions: BTreeMap<String, Resolution> = BTreeMap::new();
        let mut freq_paths: BTreeMap<String, PathBuf> = BTreeMap::new();
        for (k, v) in &pairs {
            if let Some(rest) = k.strip_prefix("frequency.") {
                if let Some(name) = rest.strip_suffix(".resolution") {
                    resolutions.insert(name.to_string(), v.parse().map_err(|_| bad(k, v))?);
                } else {
                    freq_paths.insert(rest.to_string(), cfg.resolve(v));
                }
            } else {
                cfg.set(k, v)?;
            }
            cfg.raw.insert(k.clone(), v.clone());
        }
        for (name, path) in freq_paths {
            let resolution = resolutions.remove(&name).unwrap_or(Resolution::Decade);
            cfg.frequencies.push(FrequencySource { name, path, resolution });
        }
        if let Some(name) = resolutions.keys().next() {
            return Err(UserError(format!("`frequency.{name}.resolution` set without `frequency.{name}`")));
        }
        Ok(cfg)
    }

    fn resolve(&self, v: &str) -> PathBuf {
        let p = PathBuf::from(v);
        if p.is_relative() {
            self.data_root.join(p)
        } else {
            p
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), UserError> {
        if TrainConfig::is_key(key) {
            return self.train.set(key, value).map_err(|e| UserError(e.to_string()));
        }
        if let Some(year) = key.strip_prefix("year_table.") {
            let y: i32 = num(key, year)?;
            self.year_tables.insert(y, self.resolve(value));
            return Ok(());
        }
        match key {
            "data_root" => {}
            "output_dir" => self.output_dir = PathBuf::from(value),
            "inventory" => self.inventory = Some(self.resolve(value)),
            "pronunciations" => self.pronunciations = Some(self.resolve(value)),
            "dataset" => self.dataset = Some(self.resolve(value)),
            "seeds" => self.seeds = Some(self.resolve(value)),
            "embeddings" => self.embeddings = Some(self.embedding_spec(value)?),
            "gate_k" => self.gate.gate_k = num(key, value)?,
            "max_len" => self.gate.max_len = num::<usize>(key, value)?.clamp(1, 3),
            "per_concept_cap" => self.gate.per_concept_cap = num::<usize>(key, value)?.max(1),
            "max_surface_len" => self.gate.max_surface_len = num(key, value)?,
            "distributional_k" => self.distributional_k = num(key, value)?,
            "eval_candidates" => self.eval_candidates = num::<usize>(key, value)?.max(1),
            "listing_depth" => self.listing_depth = num::<usize>(key, value)?.max(1),
            "repeats" => self.repeats = num::<usize>(key, value)?.max(1),
            "temporal_first" => self.temporal_first = num(key, value)?,
            "temporal_last" => self.temporal_last = num(key, value)?,
            "temporal_step" => {
                self.temporal_step = num(key, value)?;
                if self.temporal_step <= 0 {
                    return Err(bad(key, value));
                }
            }
            _ => return Err(UserError(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// `pseudo:DIM:SEED` selects hash-derived vectors; anything else is a table path.
    fn embedding_spec(&self, value: &str) -> Result<EmbeddingSpec, UserError> {
        match value.strip_prefix("pseudo:") {
            Some(rest) => {
                let (d, s) = rest.split_once(':').ok_or_else(|| bad("embeddings", value))?;
                let dim: usize = num("embeddings", d)?;
                if dim == 0 {
                    return Err(bad("embeddings", value));
                }
                Ok(EmbeddingSpec::Pseudo {
                    dim,
                    seed: num("embeddings", s)?,
                })
            }
            None => Ok(EmbeddingSpec::Table(self.resolve(value))),
        }
    }

    /// Every input file the run reads, with a role label.
    pub fn inputs(&self) -> Vec<(String, PathBuf)> {
        let mut out = Vec::new();
        let mut push = |role: String, p: &Option<PathBuf>| {
            if let Some(p) = p {
                out.push((role, p.clone()));
            }
        };
        push("inventory".into(), &self.inventory);
        push("dataset".into(), &self.dataset);
        push("seeds".into(), &self.seeds);
        push("pronunciations".into(), &self.pronunciations);
        if let Some(EmbeddingSpec::Table(p)) = &self.embeddings {
            out.push(("embeddings".into(), p.clone()));
        }
        for f in &self.frequencies {
            out.push((format!("frequency.{}", f.name), f.path.clone()));
        }
        for (y, p) in &self.year_tables {
            out.push((format!("year_table.{y}"), p.clone()));
        }
        out
    }

    /// Effective settings: training values merged with the raw pipeline keys.
    /// Locations that do not affect results are left out.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut m: BTreeMap<String, String> = self
            .raw
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "output_dir" | "data_root"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        m.extend(self.train.to_map());
        let g = &self.gate;
        for (k, v) in [
            ("gate_k", g.gate_k.to_string()),
            ("max_len", g.max_len.to_string()),
            ("per_concept_cap", g.per_concept_cap.to_string()),
            ("max_surface_len", g.max_surface_len.to_string()),
            ("distributional_k", self.distributional_k.to_string()),
            ("eval_candidates", self.eval_candidates.to_string()),
            ("listing_depth", self.listing_depth.to_string()),
            ("repeats", self.repeats.to_string()),
            ("temporal_first", self.temporal_first.to_string()),
            ("temporal_last", self.temporal_last.to_string()),
            ("temporal_step", self.temporal_step.to_string()),
        ] {
            m.insert(k.to_string(), v);
        }
        m
    }
}
