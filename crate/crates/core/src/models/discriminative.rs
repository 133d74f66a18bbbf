use rand_chacha::ChaCha8Rng;

use super::dense::{DenseNet, Tape};
use super::params::Params;
use super::{layer_dims, Family, Prepared, Ranker};
use crate::features::{FeatureBatch, COST_DIM, SEM_DIM};
use crate::rng;

pub const DISCRIMINATIVE_INPUT: usize = SEM_DIM + COST_DIM;

/// Unconstrained MLP over semantic stats and masked-mean cost features.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminativeModel {
    params: Params,
    net: DenseNet,
}

impl DiscriminativeModel {
    pub fn new(hidden: &[usize], seed: u64) -> Self {
        let mut rng: ChaCha8Rng = rng::derive_str(seed, "init.discriminative", 0);
        let mut params = Params::new();
        let net = DenseNet::register(&mut params, "disc.net", &layer_dims(DISCRIMINATIVE_INPUT, hidden), &mut rng);
        Self { params, net }
    }

    pub fn from_params(params: Params, hidden: &[usize]) -> Option<Self> {
        let net = DenseNet::bind(&params, "disc.net", &layer_dims(DISCRIMINATIVE_INPUT, hidden))?;
        Some(Self { params, net })
    }

    pub fn input(batch: &FeatureBatch, row: usize) -> [f64; DISCRIMINATIVE_INPUT] {
        let mut x = [0.0; DISCRIMINATIVE_INPUT];
        x[..SEM_DIM].copy_from_slice(&batch.sem[row]);
        x[SEM_DIM..].copy_from_slice(&batch.masked_mean_cost(row));
        x
    }
}

impl Ranker for DiscriminativeModel {
    fn family(&self) -> Family {
        Family::Discriminative
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn score_rows(&self, batch: &FeatureBatch, _prep: &Prepared, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&r| self.net.forward(self.params.values(), &Self::input(batch, r))[0])
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
        let mut tape = Tape::default();
        rows.iter()
            .zip(upstream)
            .map(|(&r, &up)| {
                let s = self.net.forward_taped(p, &Self::input(batch, r), &mut tape)[0];
                if up != 0.0 {
                    self.net.backward(p, &tape, &[up], grad);
                }
                s
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_morpheme_mean_is_the_row() {
        let row = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let b = FeatureBatch::from_rows(vec![[0.1; SEM_DIM]], vec![vec![row]], 0, vec![true]);
        let x = DiscriminativeModel::input(&b, 0);
        assert_eq!(&x[SEM_DIM..], &row);
    }

    #[test]
    fn identical_inputs_identical_scores() {
        let m = DiscriminativeModel::new(&[64, 32], 4);
        let row = [0.5; COST_DIM];
        // Same masked mean from different raw rows.
        let b = FeatureBatch::from_rows(
            vec![[0.2; SEM_DIM], [0.2; SEM_DIM]],
            vec![vec![row], vec![[0.0; COST_DIM], [1.0; COST_DIM]]],
            0,
            vec![true, false],
        );
        let s = m.score(&b);
        assert_eq!(s[0], s[1]);
    }

    #[test]
    fn hand_computed_forward() {
        let mut m = DiscriminativeModel::new(&[1], 0);
        let p = m.params_mut();
        let mut w = [0.0; DISCRIMINATIVE_INPUT];
        w[0] = 1.0;
        w[SEM_DIM] = -0.5;
        p.get_mut("disc.net.l0.weight").unwrap().copy_from_slice(&w);
        p.get_mut("disc.net.l0.bias").unwrap()[0] = 1.0;
        p.get_mut("disc.net.l1.weight").unwrap()[0] = -3.0;
        p.get_mut("disc.net.l1.bias").unwrap()[0] = 0.0;
        let b = FeatureBatch::from_rows(
            vec![[0.6, 0.0, 0.0, 0.0, 0.0]],
            vec![vec![[2.0; COST_DIM], [1.0; COST_DIM]]],
            0,
            vec![true],
        );
        // relu(0.6 - 0.5 * 1.5 + 1) = 0.85; out = -2.55
        assert!((m.score(&b)[0] + 2.55).abs() < 1e-12);
    }
}
