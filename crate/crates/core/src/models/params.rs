use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A named, shaped slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every trainable value of a model in one contiguous vector.
///
/// Optimizer state, gradients and finite-difference probes all index the
/// same flat layout.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Params {
    entries: Vec<ParamEntry>,
    values: Vec<f64>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an array and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], mut init: impl FnMut() -> f64) -> usize {
        let offset = self.values.len();
        let entry = ParamEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        };
        self.values.extend((0..entry.len()).map(|_| init()));
        self.entries.push(entry);
        offset
    }

    /// Rebuilds from `(name, shape, values)` arrays in order.
    pub fn from_arrays(arrays: Vec<(String, Vec<usize>, Vec<f64>)>) -> Option<Self> {
        let mut p = Self::new();
        for (name, shape, values) in arrays {
            if shape.iter().product::<usize>() != values.len() {
                return None;
            }
            let mut it = values.into_iter();
            p.push(name, &shape, || it.next().unwrap_or_default());
        }
        Some(p)
    }

    pub fn push_uniform<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut R) -> usize {
        self.push(name, shape, || if bound > 0.0 { rng.gen_range(-bound..bound) } else { 0.0 })
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entry(name).map(|e| &self.values[e.offset..e.offset + e.len()])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let e = self.entry(name)?.clone();
        Some(&mut self.values[e.offset..e.offset + e.len()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same layout, values replaced. Panics on a length mismatch.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            entries: self.entries.clone(),
            values,
        }
    }

    pub fn same_layout(&self, other: &Params) -> bool {
        self.entries == other.entries
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update((e.name.len() as u64).to_le_bytes());
            h.update(e.name.as_bytes());
            h.update((e.shape.len() as u64).to_le_bytes());
            for &d in &e.shape {
                h.update((d as u64).to_le_bytes());
            }
            for v in &self.values[e.offset..e.offset + e.len()] {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Raw value whose softplus is `y` (> 0).
pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}
