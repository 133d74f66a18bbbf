use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{DenseNet, Tape};
use super::params::{sigmoid, softplus, softplus_inverse, Params};
use super::{layer_dims, Family, Prepared, Ranker};
use crate::features::{FeatureBatch, SEM_DIM};
use crate::rng;

/// Variance epsilon inside the layer-norm square root.
pub const LN_EPS: f64 = 1e-5;

/// Normalizes the five statistics to zero mean / unit variance across entries.
/// Returns the normalized vector and `1 / sqrt(var + eps)`.
pub fn layer_norm(x: &[f64; SEM_DIM]) -> ([f64; SEM_DIM], f64) {
    let n = SEM_DIM as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    (x.map(|v| (v - mean) * inv), inv)
}

/// Input normalization of the five statistics before the learned affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SemanticNorm {
    /// Per-feature affine, initialized to standardize each statistic over
    /// the training candidates. Keeps absolute similarity levels.
    #[default]
    Feature,
    /// Per-candidate layer normalization across the five entries. Erases
    /// the common level of a candidate's statistics.
    Layer,
}

impl fmt::Display for SemanticNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SemanticNorm::Feature => "feature",
            SemanticNorm::Layer => "layer",
        })
    }
}

impl FromStr for SemanticNorm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feature" => Ok(SemanticNorm::Feature),
            "layer" => Ok(SemanticNorm::Layer),
            _ => Err(format!("unknown semantic normalization `{s}`; valid: feature, layer")),
        }
    }
}

/// Temperature-scaled compatibility score `f(norm(s)) / tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticModel {
    params: Params,
    net: DenseNet,
    norm: SemanticNorm,
    ln_gain: usize,
    ln_bias: usize,
    tau_raw: usize,
}

impl SemanticModel {
    pub fn new(hidden: &[usize], norm: SemanticNorm, seed: u64) -> Self {
        let mut rng: ChaCha8Rng = rng::derive_str(seed, "init.semantic", 0);
        let mut params = Params::new();
        let ln_gain = params.push("semantic.ln.gain", &[SEM_DIM], || 1.0);
        let ln_bias = params.push("semantic.ln.bias", &[SEM_DIM], || 0.0);
        let net = DenseNet::register(&mut params, "semantic.f", &layer_dims(SEM_DIM, hidden), &mut rng);
        let tau_raw = params.push("semantic.tau_raw", &[1], || softplus_inverse(1.0));
        Self {
            params,
            net,
            norm,
            ln_gain,
            ln_bias,
            tau_raw,
        }
    }

    pub fn from_params(params: Params, hidden: &[usize], norm: SemanticNorm) -> Option<Self> {
        let net = DenseNet::bind(&params, "semantic.f", &layer_dims(SEM_DIM, hidden))?;
        Some(Self {
            norm,
            ln_gain: params.entry("semantic.ln.gain")?.offset,
            ln_bias: params.entry("semantic.ln.bias")?.offset,
            tau_raw: params.entry("semantic.tau_raw")?.offset,
            params,
            net,
        })
    }

    pub fn norm(&self) -> SemanticNorm {
        self.norm
    }

    /// Sets the feature-mode affine to standardize each statistic over the
    /// valid rows of `batches`. No-op in layer mode or without data.
    pub fn standardize_from(&mut self, batches: &[FeatureBatch]) {
        if self.norm != SemanticNorm::Feature {
            return;
        }
        let mut n = 0usize;
        let mut sum = [0.0; SEM_DIM];
        let mut sq = [0.0; SEM_DIM];
        for b in batches {
            for r in b.valid_indices() {
                n += 1;
                for k in 0..SEM_DIM {
                    sum[k] += b.sem[r][k];
                    sq[k] += b.sem[r][k] * b.sem[r][k];
                }
            }
        }
        if n == 0 {
            return;
        }
        let v = self.params.values_mut();
        for k in 0..SEM_DIM {
            let mean = sum[k] / n as f64;
            let var = (sq[k] / n as f64 - mean * mean).max(0.0);
            let scale = if var.sqrt() > 1e-8 { 1.0 / var.sqrt() } else { 1.0 };
            v[self.ln_gain + k] = scale;
            v[self.ln_bias + k] = -mean * scale;
        }
    }

    pub fn tau(&self) -> f64 {
        softplus(self.params.values()[self.tau_raw])
    }

    fn affine(&self, x: &[f64; SEM_DIM]) -> ([f64; SEM_DIM], [f64; SEM_DIM], f64) {
        let p = self.params.values();
        let (xhat, inv) = match self.norm {
            SemanticNorm::Layer => layer_norm(x),
            SemanticNorm::Feature => (*x, 1.0),
        };
        let mut y = [0.0; SEM_DIM];
        for k in 0..SEM_DIM {
            y[k] = p[self.ln_gain + k] * xhat[k] + p[self.ln_bias + k];
        }
        (y, xhat, inv)
    }
}

impl Ranker for SemanticModel {
    fn family(&self) -> Family {
        Family::Semantic
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn score_rows(&self, batch: &FeatureBatch, _prep: &Prepared, rows: &[usize]) -> Vec<f64> {
        let tau = self.tau();
        rows.iter()
            .map(|&r| {
                let (y, _, _) = self.affine(&batch.sem[r]);
                self.net.forward(self.params.values(), &y)[0] / tau
            })
            .collect()
    }

    fn backward_rows(
        &self,
        batch: &FeatureBatch,
        _prep: &Prepared,
        rows: &[usize],
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let p = self.params.values();
        let raw = p[self.tau_raw];
        let tau = softplus(raw);
        let mut tape = Tape::default();
        let mut scores = Vec::with_capacity(rows.len());
        for (&r, &up) in rows.iter().zip(upstream) {
            let (y, xhat, _) = self.affine(&batch.sem[r]);
            let f = self.net.forward_taped(p, &y, &mut tape)[0];
            scores.push(f / tau);
            if up == 0.0 {
                continue;
            }
            let dy = self.net.backward(p, &tape, &[up / tau], grad);
            for k in 0..SEM_DIM {
                grad[self.ln_gain + k] += dy[k] * xhat[k];
                grad[self.ln_bias + k] += dy[k];
            }
            // d(f / tau) / d tau_raw = -f / tau^2 * softplus'(raw)
            grad[self.tau_raw] += up * (-f / (tau * tau)) * sigmoid(raw);
        }
        scores
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::random_batch;

    #[test]
    fn constant_stats_normalize_to_zero() {
        let (xhat, _) = layer_norm(&[0.4; SEM_DIM]);
        assert_eq!(xhat, [0.0; SEM_DIM]);
        let m = SemanticModel::new(&[32, 16], SemanticNorm::Layer, 9);
        let b = FeatureBatch::from_rows(
            vec![[0.4; SEM_DIM], [-0.7; SEM_DIM]],
            vec![vec![[0.0; 8]], vec![[1.0; 8]]],
            0,
            vec![true, false],
        );
        let s = m.score(&b);
        assert_eq!(s[0], s[1]);
    }

    #[test]
    fn halving_tau_doubles_scores() {
        let mut m = SemanticModel::new(&[32, 16], SemanticNorm::Feature, 2);
        let b = random_batch(15, 3);
        let s1 = m.score(&b);
        let off = m.params().entry("semantic.tau_raw").unwrap().offset;
        m.params_mut().values_mut()[off] = softplus_inverse(0.5);
        let s2 = m.score(&b);
        for (a, c) in s1.iter().zip(&s2) {
            assert!((2.0 * a - c).abs() < 1e-12);
        }
        let order = |s: &[f64]| {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
            idx
        };
        assert_eq!(order(&s1), order(&s2));
    }

    #[test]
    fn hand_computed_tiny_net() {
        let mut m = SemanticModel::new(&[1], SemanticNorm::Layer, 0);
        let p = m.params_mut();
        p.get_mut("semantic.f.l0.weight").unwrap().copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        p.get_mut("semantic.f.l0.bias").unwrap()[0] = 0.0;
        p.get_mut("semantic.f.l1.weight").unwrap()[0] = 2.0;
        p.get_mut("semantic.f.l1.bias").unwrap()[0] = 0.5;
        let s = [1.0, 0.0, 0.0, 0.0, -1.0];
        // mean 0, var 0.4, xhat0 = 1 / sqrt(0.4 + 1e-5)
        let xhat0 = 1.0 / (0.4f64 + 1e-5).sqrt();
        let b = FeatureBatch::from_rows(vec![s], vec![vec![[0.0; 8]]], 0, vec![true]);
        let got = m.score(&b)[0];
        assert!((got - (2.0 * xhat0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn feature_mode_keeps_levels_layer_mode_erases_them() {
        let low = [0.2, 0.2, 0.0, 0.0, 0.2];
        let high = [0.8, 0.8, 0.0, 0.0, 0.8];
        let b = FeatureBatch::from_rows(vec![low, high], vec![vec![[0.0; 8]]; 2], 0, vec![true, false]);
        let layer = SemanticModel::new(&[4], SemanticNorm::Layer, 1);
        let s = layer.score(&b);
        let layer_gap = (s[0] - s[1]).abs();
        assert!(layer_gap < 1e-3, "{layer_gap}");
        let mut feat = SemanticModel::new(&[4], SemanticNorm::Feature, 1);
        feat.standardize_from(std::slice::from_ref(&b));
        let s = feat.score(&b);
        assert!((s[0] - s[1]).abs() > 100.0 * layer_gap);
    }

    #[test]
    fn standardization_centers_each_statistic() {
        let b = random_batch(50, 4);
        let mut m = SemanticModel::new(&[4], SemanticNorm::Feature, 1);
        m.standardize_from(std::slice::from_ref(&b));
        let (g, o) = (m.params().get("semantic.ln.gain").unwrap(), m.params().get("semantic.ln.bias").unwrap());
        for k in 0..SEM_DIM {
            let ys: Vec<f64> = b.sem.iter().map(|s| g[k] * s[k] + o[k]).collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
    }
}
