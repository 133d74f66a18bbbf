use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::CheckpointError;
use super::cost::CostModel;
use super::dense::{DenseNet, Tape};
use super::loss::normalize_pool_scores;
use super::params::Params;
use super::semantic::SemanticModel;
use super::{layer_dims, Family, Prepared, Ranker};
use crate::features::FeatureBatch;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum S1Variant {
    Linear,
    Nonlinear,
}

impl S1Variant {
    pub fn family(self) -> Family {
        match self {
            S1Variant::Linear => Family::S1Linear,
            S1Variant::Nonlinear => Family::S1Nonlinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Utility {
    Linear { w_sem: usize, w_cost: usize, bias: usize },
    Nonlinear(DenseNet),
}

/// Utility over pool-normalized scores of two frozen base models.
///
/// The bases are owned immutably; only the utility parameters are exposed
/// through [`Ranker::params_mut`], so base hashes cannot drift.
#[derive(Debug, Clone, PartialEq)]
pub struct S1Model {
    variant: S1Variant,
    params: Params,
    utility: Utility,
    cost: CostModel,
    semantic: SemanticModel,
    cost_digest: String,
    semantic_digest: String,
}

impl S1Model {
    /// Fresh utility over the given frozen bases.
    pub fn new(variant: S1Variant, cost: CostModel, semantic: SemanticModel, hidden: &[usize], seed: u64) -> Self {
        let mut rng: ChaCha8Rng = rng::derive_str(seed, "init.s1", variant as u64);
        let mut params = Params::new();
        let utility = match variant {
            S1Variant::Linear => {
                let bound = 1.0 / 2f64.sqrt();
                Utility::Linear {
                    w_sem: params.push_uniform("s1.w_sem", &[1], bound, &mut rng),
                    w_cost: params.push_uniform("s1.w_cost", &[1], bound, &mut rng),
                    bias: params.push("s1.bias", &[1], || 0.0),
                }
            }
            S1Variant::Nonlinear => Utility::Nonlinear(DenseNet::register(&mut params, "s1.u", &layer_dims(2, hidden), &mut rng)),
        };
        let cost_digest = cost.params().digest();
        let semantic_digest = semantic.params().digest();
        Self {
            variant,
            params,
            utility,
            cost,
            semantic,
            cost_digest,
            semantic_digest,
        }
    }

    /// Rebuilds from stored parameters, refusing bases whose hash differs
    /// from the recorded one.
    pub fn from_parts(
        variant: S1Variant,
        params: Params,
        hidden: &[usize],
        cost: CostModel,
        semantic: SemanticModel,
        expected_cost: &str,
        expected_semantic: &str,
    ) -> Result<Self, CheckpointError> {
        for (what, got, want) in [
            ("cost", cost.params().digest(), expected_cost),
            ("semantic", semantic.params().digest(), expected_semantic),
        ] {
            if got != want {
                return Err(CheckpointError::BaseHashMismatch {
                    base: what.to_string(),
                    expected: want.to_string(),
                    found: got,
                });
            }
        }
        let missing = || CheckpointError::Layout(format!("{} parameters do not match", variant.family()));
        let utility = match variant {
            S1Variant::Linear => Utility::Linear {
                w_sem: params.entry("s1.w_sem").ok_or_else(missing)?.offset,
                w_cost: params.entry("s1.w_cost").ok_or_else(missing)?.offset,
                bias: params.entry("s1.bias").ok_or_else(missing)?.offset,
            },
            S1Variant::Nonlinear => Utility::Nonlinear(DenseNet::bind(&params, "s1.u", &layer_dims(2, hidden)).ok_or_else(missing)?),
        };
        Ok(Self {
            variant,
            params,
            utility,
            cost,
            semantic,
            cost_digest: expected_cost.to_string(),
            semantic_digest: expected_semantic.to_string(),
        })
    }

    pub fn variant(&self) -> S1Variant {
        self.variant
    }

    pub fn cost_base(&self) -> &CostModel {
        &self.cost
    }

    pub fn semantic_base(&self) -> &SemanticModel {
        &self.semantic
    }

    /// Recorded `(cost, semantic)` base digests.
    pub fn base_digests(&self) -> (&str, &str) {
        (&self.cost_digest, &self.semantic_digest)
    }

    /// Sets linear weights directly; no-op on the nonlinear variant.
    pub fn set_linear(&mut self, w_sem: f64, w_cost: f64, bias: f64) {
        if let Utility::Linear { w_sem: a, w_cost: c, bias: b } = self.utility {
            let v = self.params.values_mut();
            v[a] = w_sem;
            v[c] = w_cost;
            v[b] = bias;
        }
    }

    /// `(w_sem, w_cost, bias)` for the linear variant.
    pub fn linear_weights(&self) -> Option<(f64, f64, f64)> {
        match self.utility {
            Utility::Linear { w_sem, w_cost, bias } => {
                let v = self.params.values();
                Some((v[w_sem], v[w_cost], v[bias]))
            }
            Utility::Nonlinear(_) => None,
        }
    }

    /// Zeroes the last layer of the nonlinear utility.
    pub fn zero_output(&mut self) {
        if let Utility::Nonlinear(net) = &self.utility {
            net.zero_output_layer(self.params.values_mut());
        }
    }

    fn utility(&self, x: [f64; 2]) -> f64 {
        let v = self.params.values();
        match &self.utility {
            Utility::Linear { w_sem, w_cost, bias } => v[*w_sem] * x[0] + v[*w_cost] * x[1] + v[*bias],
            Utility::Nonlinear(net) => net.forward(v, &[x[1], x[0]])[0],
        }
    }

    fn inputs(prep: &Prepared) -> &[[f64; 2]] {
        prep.s1_inputs.as_deref().expect("s1 scoring needs prepared base scores")
    }
}

impl Ranker for S1Model {
    fn family(&self) -> Family {
        self.variant.family()
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Within-pool z-scores of the frozen base scores over valid rows.
    fn prepare(&self, batch: &FeatureBatch) -> Prepared {
        let sem = normalize_pool_scores(&self.semantic.score(batch), &batch.valid);
        let cost = normalize_pool_scores(&self.cost.score(batch), &batch.valid);
        Prepared {
            s1_inputs: Some(sem.into_iter().zip(cost).map(|(s, c)| [s, c]).collect()),
        }
    }

    fn score_rows(&self, _batch: &FeatureBatch, prep: &Prepared, rows: &[usize]) -> Vec<f64> {
        let x = Self::inputs(prep);
        rows.iter().map(|&r| self.utility(x[r])).collect()
    }

    fn backward_rows(
        &self,
        _batch: &FeatureBatch,
        prep: &Prepared,
        rows: &[usize],
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let x = Self::inputs(prep);
        let v = self.params.values();
        let mut tape = Tape::default();
        rows.iter()
            .zip(upstream)
            .map(|(&r, &up)| {
                let [s, c] = x[r];
                match &self.utility {
                    Utility::Linear { w_sem, w_cost, bias } => {
                        grad[*w_sem] += up * s;
                        grad[*w_cost] += up * c;
                        grad[*bias] += up;
                        v[*w_sem] * s + v[*w_cost] * c + v[*bias]
                    }
                    Utility::Nonlinear(net) => {
                        let out = net.forward_taped(v, &[c, s], &mut tape)[0];
                        if up != 0.0 {
                            net.backward(v, &tape, &[up], grad);
                        }
                        out
                    }
                }
            })
            .collect()
    }
}
