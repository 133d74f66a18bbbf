//! The five ranking families and their exact gradients.
//!
//! Every family scores whole candidate pools ([`FeatureBatch`]) and can
//! backpropagate an upstream gradient over a subset of rows into its flat
//! parameter vector.
//!
//! - `cost`: `-gamma * sum_i h(x_i)` over unmasked morpheme positions.
//! - `semantic`: `f(norm(s)) / tau` over the five semantic statistics.
//! - `discriminative`: an MLP over the semantic statistics concatenated
//!   with the masked mean of the cost rows.
//! - `s1-linear` / `s1-nonlinear`: a utility over the pool-normalized
//!   scores of frozen cost and semantic models.

mod checkpoint;
mod cost;
mod dense;
mod gradcheck;
mod discriminative;
mod loss;
mod params;
mod s1;
mod semantic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{CheckpointError, ModelCheckpoint, TrainingMeta, CHECKPOINT_VERSION};
pub use cost::CostModel;
pub use dense::{DenseNet, Tape};
pub use discriminative::DiscriminativeModel;
pub use gradcheck::{check_gradients, relative_error, GradCheck, GRAD_FLOOR};
pub use loss::{normalize_pool_scores, pairwise_softplus_loss, PairwiseLoss, SCORE_STD_FLOOR};
pub use params::{sigmoid, softplus, softplus_inverse, ParamEntry, Params};
pub use s1::{S1Model, S1Variant};
pub use semantic::{layer_norm, SemanticModel, SemanticNorm, LN_EPS};

use crate::features::FeatureBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Cost,
    Semantic,
    Discriminative,
    S1Linear,
    S1Nonlinear,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Cost,
        Family::Semantic,
        Family::Discriminative,
        Family::S1Linear,
        Family::S1Nonlinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Cost => "cost",
            Family::Semantic => "semantic",
            Family::Discriminative => "discriminative",
            Family::S1Linear => "s1-linear",
            Family::S1Nonlinear => "s1-nonlinear",
        }
    }

    pub fn is_s1(self) -> bool {
        matches!(self, Family::S1Linear | Family::S1Nonlinear)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
                format!("unknown family `{s}`; valid: {}", names.join(", "))
            })
    }
}

/// Hidden layer sizes per family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub cost_hidden: Vec<usize>,
    pub semantic_hidden: Vec<usize>,
    pub discriminative_hidden: Vec<usize>,
    pub s1_hidden: Vec<usize>,
    pub semantic_norm: SemanticNorm,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            cost_hidden: vec![16],
            semantic_hidden: vec![32, 16],
            discriminative_hidden: vec![64, 32],
            s1_hidden: vec![8],
            semantic_norm: SemanticNorm::Feature,
        }
    }
}

pub(crate) fn layer_dims(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(1);
    d
}

/// Per-batch values a model can precompute once; frozen S1 inputs live here.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prepared {
    /// Pool-normalized `(semantic, cost)` base scores.
    pub s1_inputs: Option<Vec<[f64; 2]>>,
}

/// Common interface of all families.
pub trait Ranker: Send + Sync {
    fn family(&self) -> Family;
    fn params(&self) -> &Params;
    fn params_mut(&mut self) -> &mut Params;

    fn prepare(&self, _batch: &FeatureBatch) -> Prepared {
        Prepared::default()
    }

    /// Scores at `rows`.
    fn score_rows(&self, batch: &FeatureBatch, prep: &Prepared, rows: &[usize]) -> Vec<f64>;

    /// Adds `d(sum_j upstream[j] * score(rows[j])) / d params` into `grad`
    /// and returns the scores at `rows`.
    fn backward_rows(
        &self,
        batch: &FeatureBatch,
        prep: &Prepared,
        rows: &[usize],
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64>;

    /// Scores for every row of the batch.
    fn score(&self, batch: &FeatureBatch) -> Vec<f64> {
        let prep = self.prepare(batch);
        let rows: Vec<usize> = (0..batch.len()).collect();
        self.score_rows(batch, &prep, &rows)
    }
}

/// Any of the five families. Few live at once, so variants stay unboxed.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Cost(CostModel),
    Semantic(SemanticModel),
    Discriminative(DiscriminativeModel),
    S1(S1Model),
}

impl Model {
    /// Fresh base model (not S1; those need frozen bases, see [`S1Model::new`]).
    pub fn init_base(family: Family, arch: &Architecture, seed: u64) -> Option<Self> {
        Some(match family {
            Family::Cost => Model::Cost(CostModel::new(&arch.cost_hidden, seed)),
            Family::Semantic => Model::Semantic(SemanticModel::new(&arch.semantic_hidden, arch.semantic_norm, seed)),
            Family::Discriminative => {
                Model::Discriminative(DiscriminativeModel::new(&arch.discriminative_hidden, seed))
            }
            Family::S1Linear | Family::S1Nonlinear => return None,
        })
    }

    fn inner(&self) -> &dyn Ranker {
        match self {
            Model::Cost(m) => m,
            Model::Semantic(m) => m,
            Model::Discriminative(m) => m,
            Model::S1(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Ranker {
        match self {
            Model::Cost(m) => m,
            Model::Semantic(m) => m,
            Model::Discriminative(m) => m,
            Model::S1(m) => m,
        }
    }
}

impl Ranker for Model {
    fn family(&self) -> Family {
        self.inner().family()
    }

    fn params(&self) -> &Params {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut Params {
        self.inner_mut().params_mut()
    }

    fn prepare(&self, batch: &FeatureBatch) -> Prepared {
        self.inner().prepare(batch)
    }

    fn score_rows(&self, batch: &FeatureBatch, prep: &Prepared, rows: &[usize]) -> Vec<f64> {
        self.inner().score_rows(batch, prep, rows)
    }

    fn backward_rows(
        &self,
        batch: &FeatureBatch,
        prep: &Prepared,
        rows: &[usize],
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        self.inner().backward_rows(batch, prep, rows, upstream, grad)
    }
}
