use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cost::CostModel;
use super::discriminative::DiscriminativeModel;
use super::params::Params;
use super::s1::{S1Model, S1Variant};
use super::semantic::SemanticModel;
use super::{Architecture, Family, Model, Ranker};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MRANKCK\0";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("parameter hash mismatch for {section}: header {expected}, data {found}")]
    HashMismatch {
        section: String,
        expected: String,
        found: String,
    },
    #[error("frozen {base} base hash mismatch: expected {expected}, found {found}")]
    BaseHashMismatch {
        base: String,
        expected: String,
        found: String,
    },
    #[error("parameter layout mismatch: {0}")]
    Layout(String),
}

/// Training provenance stored with each checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_mrr: f64,
}

/// A serializable model: its own parameters plus, for S1, the frozen bases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub family: Family,
    pub architecture: Architecture,
    pub params: Params,
    /// `(cost, semantic)` frozen bases for S1 families.
    pub bases: Option<(Params, Params)>,
    pub config: BTreeMap<String, String>,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SectionHeader {
    role: String,
    digest: String,
    arrays: Vec<ArrayHeader>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    family: Family,
    architecture: Architecture,
    sections: Vec<SectionHeader>,
    config: BTreeMap<String, String>,
    meta: TrainingMeta,
}

impl ModelCheckpoint {
    pub fn from_model(model: &Model, architecture: &Architecture, config: BTreeMap<String, String>, meta: TrainingMeta) -> Self {
        let bases = match model {
            Model::S1(m) => Some((m.cost_base().params().clone(), m.semantic_base().params().clone())),
            _ => None,
        };
        Self {
            family: model.family(),
            architecture: architecture.clone(),
            params: model.params().clone(),
            bases,
            config,
            meta,
        }
    }

    pub fn digest(&self) -> String {
        self.params.digest()
    }

    pub fn to_model(&self) -> Result<Model, CheckpointError> {
        let arch = &self.architecture;
        let layout = |f: Family| CheckpointError::Layout(format!("{f} parameters do not match the architecture"));
        let p = self.params.clone();
        Ok(match self.family {
            Family::Cost => Model::Cost(CostModel::from_params(p, &arch.cost_hidden).ok_or_else(|| layout(Family::Cost))?),
            Family::Semantic => {
                Model::Semantic(SemanticModel::from_params(p, &arch.semantic_hidden, arch.semantic_norm).ok_or_else(|| layout(Family::Semantic))?)
            }
            Family::Discriminative => Model::Discriminative(
                DiscriminativeModel::from_params(p, &arch.discriminative_hidden).ok_or_else(|| layout(Family::Discriminative))?,
            ),
            Family::S1Linear | Family::S1Nonlinear => {
                let (c, s) = self
                    .bases
                    .clone()
                    .ok_or_else(|| CheckpointError::Layout("S1 checkpoint without frozen bases".into()))?;
                let (hc, hs) = (c.digest(), s.digest());
                let cost = CostModel::from_params(c, &arch.cost_hidden).ok_or_else(|| layout(Family::Cost))?;
                let sem = SemanticModel::from_params(s, &arch.semantic_hidden, arch.semantic_norm).ok_or_else(|| layout(Family::Semantic))?;
                let variant = if self.family == Family::S1Linear {
                    S1Variant::Linear
                } else {
                    S1Variant::Nonlinear
                };
                Model::S1(S1Model::from_parts(variant, p, &arch.s1_hidden, cost, sem, &hc, &hs)?)
            }
        })
    }

    fn sections(&self) -> Vec<(&'static str, &Params)> {
        let mut v = vec![("model", &self.params)];
        if let Some((c, s)) = &self.bases {
            v.push(("base.cost", c));
            v.push(("base.semantic", s));
        }
        v
    }

    /// Magic, version, JSON header length and header, then every array as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let sections = self.sections();
        let header = Header {
            family: self.family,
            architecture: self.architecture.clone(),
            sections: sections
                .iter()
                .map(|(role, p)| SectionHeader {
                    role: role.to_string(),
                    digest: p.digest(),
                    arrays: p
                        .entries()
                        .iter()
                        .map(|e| ArrayHeader {
                            name: e.name.clone(),
                            shape: e.shape.clone(),
                        })
                        .collect(),
                })
                .collect(),
            config: self.config.clone(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(json.len() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, p) in sections {
            for v in p.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8], CheckpointError> {
            if cur.len() < n {
                return Err(CheckpointError::Truncated);
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(MAGIC.len())? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hlen = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(take(hlen)?).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let mut sections = BTreeMap::new();
        for sec in header.sections {
            let mut arrays = Vec::with_capacity(sec.arrays.len());
            for a in sec.arrays {
                let n: usize = a.shape.iter().product();
                let raw = take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
                let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                arrays.push((a.name, a.shape, values));
            }
            let params = Params::from_arrays(arrays).ok_or_else(|| CheckpointError::Header("array shape mismatch".into()))?;
            let found = params.digest();
            if found != sec.digest {
                return Err(CheckpointError::HashMismatch {
                    section: sec.role,
                    expected: sec.digest,
                    found,
                });
            }
            sections.insert(sec.role, params);
        }
        if !exact_length(bytes, &sections, hlen) {
            return Err(CheckpointError::Header("trailing bytes".into()));
        }
        let params = sections
            .remove("model")
            .ok_or_else(|| CheckpointError::Header("missing model section".into()))?;
        let bases = match (sections.remove("base.cost"), sections.remove("base.semantic")) {
            (Some(c), Some(s)) => Some((c, s)),
            (None, None) => None,
            _ => return Err(CheckpointError::Header("incomplete base sections".into())),
        };
        if header.family.is_s1() != bases.is_some() {
            return Err(CheckpointError::Header("base sections do not match family".into()));
        }
        Ok(Self {
            family: header.family,
            architecture: header.architecture,
            params,
            bases,
            config: header.config,
            meta: header.meta,
        })
    }

    /// Human-readable summary written next to the binary file.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "family\t{}", self.family);
        let _ = writeln!(s, "version\t{CHECKPOINT_VERSION}");
        let _ = writeln!(
            s,
            "meta\tseed={}\tepochs={}\tbest_epoch={}\tbest_val_mrr={:.6}",
            self.meta.seed, self.meta.epochs, self.meta.best_epoch, self.meta.best_val_mrr
        );
        for (role, p) in self.sections() {
            let _ = writeln!(s, "section\t{role}\t{}\t{} values", p.digest(), p.len());
            for e in p.entries() {
                let dims: Vec<String> = e.shape.iter().map(|d| d.to_string()).collect();
                let _ = writeln!(s, "  {}\t[{}]", e.name, dims.join(","));
            }
        }
        for (k, v) in &self.config {
            let _ = writeln!(s, "config\t{k}\t{v}");
        }
        s
    }

    /// Writes `path` and `path.manifest.txt`.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        std::fs::write(path, self.to_bytes()).map_err(io)?;
        std::fs::write(manifest_path(path), self.manifest()).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Whether the byte count accounts exactly for header and data.
fn exact_length(bytes: &[u8], sections: &BTreeMap<String, Params>, hlen: usize) -> bool {
    let data: usize = sections.values().map(|p| p.len() * 8).sum();
    bytes.len() == MAGIC.len() + 4 + 8 + hlen + data
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.txt");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::random_batch;

    fn all_models() -> Vec<Model> {
        let arch = Architecture::default();
        let cost = CostModel::new(&arch.cost_hidden, 1);
        let sem = SemanticModel::new(&arch.semantic_hidden, arch.semantic_norm, 2);
        vec![
            Model::Cost(cost.clone()),
            Model::Semantic(sem.clone()),
            Model::Discriminative(DiscriminativeModel::new(&arch.discriminative_hidden, 3)),
            Model::S1(S1Model::new(S1Variant::Linear, cost.clone(), sem.clone(), &arch.s1_hidden, 4)),
            Model::S1(S1Model::new(S1Variant::Nonlinear, cost, sem, &arch.s1_hidden, 5)),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let batch = random_batch(30, 8);
        let dir = tempfile::tempdir().unwrap();
        for (i, m) in all_models().into_iter().enumerate() {
            let mut cfg = BTreeMap::new();
            cfg.insert("lr".to_string(), "0.001".to_string());
            let meta = TrainingMeta {
                seed: 7,
                epochs: 12,
                best_epoch: 4,
                best_val_mrr: 0.25,
            };
            let ck = ModelCheckpoint::from_model(&m, &Architecture::default(), cfg, meta);
            let path = dir.path().join(format!("m{i}.ckpt"));
            ck.save(&path).unwrap();
            assert!(manifest_path(&path).exists());
            let back = ModelCheckpoint::load(&path).unwrap();
            assert_eq!(back, ck);
            let restored = back.to_model().unwrap();
            let a: Vec<u64> = m.score(&batch).iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = restored.score(&batch).iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b, "{}", m.family());
        }
    }

    #[test]
    fn corrupted_data_is_rejected() {
        let ck = ModelCheckpoint::from_model(&all_models()[0], &Architecture::default(), BTreeMap::new(), TrainingMeta::default());
        let mut bytes = ck.to_bytes();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        assert!(matches!(ModelCheckpoint::from_bytes(&bytes), Err(CheckpointError::HashMismatch { .. })));
        assert!(matches!(ModelCheckpoint::from_bytes(&bytes[..20]), Err(CheckpointError::Truncated)));
        assert!(matches!(ModelCheckpoint::from_bytes(b"garbage-bytes-here!!"), Err(CheckpointError::BadMagic)));
    }
}
