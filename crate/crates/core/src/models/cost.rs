use rand_chacha::ChaCha8Rng;

use super::dense::{DenseNet, Tape};
use super::params::{sigmoid, softplus, softplus_inverse, Params};
use super::{layer_dims, Family, Prepared, Ranker};
use crate::features::{FeatureBatch, COST_DIM, MAX_POSITIONS};
use crate::rng;

/// Additive per-morpheme production cost, negated and scaled by `gamma > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    params: Params,
    net: DenseNet,
    gamma_raw: usize,
}

impl CostModel {
    pub fn new(hidden: &[usize], seed: u64) -> Self {
        let mut rng: ChaCha8Rng = rng::derive_str(seed, "init.cost", 0);
        let mut params = Params::new();
        let net = DenseNet::register(&mut params, "cost.h", &layer_dims(COST_DIM, hidden), &mut rng);
        let gamma_raw = params.push("cost.gamma_raw", &[1], || softplus_inverse(1.0));
        Self { params, net, gamma_raw }
    }

    pub fn from_params(params: Params, hidden: &[usize]) -> Option<Self> {
        let net = DenseNet::bind(&params, "cost.h", &layer_dims(COST_DIM, hidden))?;
        let gamma_raw = params.entry("cost.gamma_raw")?.offset;
        Some(Self { params, net, gamma_raw })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn gamma(&self) -> f64 {
        softplus(self.params.values()[self.gamma_raw])
    }

    /// Unscaled `sum_i h(x_i)` over unmasked positions.
    pub fn total_cost(&self, batch: &FeatureBatch, row: usize) -> f64 {
        let p = self.params.values();
        (0..MAX_POSITIONS)
            .filter(|&pos| batch.mask[row][pos])
            .map(|pos| self.net.forward(p, &batch.cost[row][pos])[0])
            .sum()
    }
}

impl Ranker for CostModel {
    fn family(&self) -> Family {
        Family::Cost
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn score_rows(&self, batch: &FeatureBatch, _prep: &Prepared, rows: &[usize]) -> Vec<f64> {
        let gamma = self.gamma();
        rows.iter().map(|&r| -gamma * self.total_cost(batch, r)).collect()
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
        let raw = p[self.gamma_raw];
        let gamma = softplus(raw);
        let mut tape = Tape::default();
        let mut scores = Vec::with_capacity(rows.len());
        for (&r, &up) in rows.iter().zip(upstream) {
            let mut total = 0.0;
            for pos in (0..MAX_POSITIONS).filter(|&pos| batch.mask[r][pos]) {
                let h = self.net.forward_taped(p, &batch.cost[r][pos], &mut tape)[0];
                total += h;
                if up != 0.0 {
                    self.net.backward(p, &tape, &[-gamma * up], grad);
                }
            }
            grad[self.gamma_raw] += up * -total * sigmoid(raw);
            scores.push(-gamma * total);
        }
        scores
    }
}
