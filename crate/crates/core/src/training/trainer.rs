use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adam::Adam;
use super::config::TrainConfig;
use super::mining::mine_negatives;
use crate::eval::batch_mrr;
use crate::features::FeatureBatch;
use crate::models::{
    pairwise_softplus_loss, CostModel, Family, Model, ModelCheckpoint, Ranker, S1Model, S1Variant, SemanticModel,
    TrainingMeta,
};
use crate::parallel::par_map;
use crate::rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{family} needs frozen base checkpoints; missing: {}", missing.join(", "))]
    MissingBases { family: Family, missing: Vec<String> },
    #[error("no trainable items (every pool needs the gold and at least one negative)")]
    NoTrainingItems,
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] crate::models::CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
    /// Training aborted mid-epoch on a non-finite gradient.
    NonFiniteGradient { epoch: usize, index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_mrr: f64,
    pub val_mrr: f64,
    pub hard_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunReport {
    pub family: Family,
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mrr: f64,
    pub stop_reason: StopReason,
    pub config: BTreeMap<String, String>,
    /// Excluded from serialization so reports stay byte-reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// Frozen bases for S1 training.
#[derive(Debug, Clone, Copy)]
pub struct Bases<'a> {
    pub cost: Option<&'a CostModel>,
    pub semantic: Option<&'a SemanticModel>,
}

impl Bases<'_> {
    pub fn none() -> Self {
        Self { cost: None, semantic: None }
    }
}

fn trainable(b: &FeatureBatch) -> bool {
    b.valid.get(b.gold_index).copied().unwrap_or(false) && b.valid_indices().nth(1).is_some()
}

/// Fresh model for `family`.
///
/// The semantic family's input affine is initialized from the statistics of
/// `train`.
pub fn init_model(family: Family, cfg: &TrainConfig, bases: Bases<'_>, train: &[FeatureBatch], seed: u64) -> Result<Model, TrainError> {
    let arch = &cfg.architecture;
    if let Some(mut m) = Model::init_base(family, arch, seed) {
        if let Model::Semantic(s) = &mut m {
            s.standardize_from(train);
        }
        return Ok(m);
    }
    let mut missing = Vec::new();
    if bases.cost.is_none() {
        missing.push(Family::Cost.to_string());
    }
    if bases.semantic.is_none() {
        missing.push(Family::Semantic.to_string());
    }
    match (bases.cost, bases.semantic) {
        (Some(c), Some(s)) => {
            let variant = if family == Family::S1Linear {
                S1Variant::Linear
            } else {
                S1Variant::Nonlinear
            };
            Ok(Model::S1(S1Model::new(variant, c.clone(), s.clone(), &arch.s1_hidden, seed)))
        }
        _ => Err(TrainError::MissingBases { family, missing }),
    }
}

/// Loss and parameter gradient for one item.
pub fn item_gradient(model: &Model, batch: &FeatureBatch, negatives: &[usize], grad: &mut [f64]) -> f64 {
    let prep = model.prepare(batch);
    let mut rows = Vec::with_capacity(negatives.len() + 1);
    rows.push(batch.gold_index);
    rows.extend_from_slice(negatives);
    let s = model.score_rows(batch, &prep, &rows);
    let l = pairwise_softplus_loss(s[0], &s[1..]);
    let mut up = Vec::with_capacity(rows.len());
    up.push(l.d_gold);
    up.extend_from_slice(&l.d_negatives);
    model.backward_rows(batch, &prep, &rows, &up, grad);
    l.loss
}

fn negatives_for(model: &Model, batch: &FeatureBatch, hard: f64, cfg: &TrainConfig, seed: u64, epoch: usize, item: usize) -> Vec<usize> {
    let mut r = rng::derive(seed, &[b"mine", &(epoch as u64).to_le_bytes(), &(item as u64).to_le_bytes()]);
    let scores = (hard > 0.0).then(|| model.score(batch));
    mine_negatives(
        &batch.valid,
        &batch.overlaps_gold,
        batch.gold_index,
        scores.as_deref(),
        hard,
        &cfg.curriculum(),
        &mut r,
    )
}

/// Trains one family and returns the best-validation checkpoint.
///
/// Each optimizer step averages gradients over `batch_size` items; per-item
/// gradients are computed in parallel and summed in item order. Validation
/// MRR decides the best epoch; with an empty validation set the training
/// diagnostic MRR is used instead.
pub fn train_family(
    family: Family,
    train: &[FeatureBatch],
    val: &[FeatureBatch],
    bases: Bases<'_>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ModelCheckpoint, TrainRunReport), TrainError> {
    let started = Instant::now();
    let mut model = init_model(family, cfg, bases, train, seed)?;
    let items: Vec<usize> = (0..train.len()).filter(|&i| trainable(&train[i])).collect();
    if items.is_empty() {
        return Err(TrainError::NoTrainingItems);
    }
    let val: Vec<FeatureBatch> = val.iter().filter(|b| trainable(b)).cloned().collect();
    let diag: Vec<FeatureBatch> = items.iter().take(cfg.train_eval_items).map(|&i| train[i].clone()).collect();
    let curriculum = cfg.curriculum();
    let mut adam = Adam::new(cfg.adam, model.params().len());
    let mut best = model.params().clone();
    let mut best_epoch = 0;
    let mut best_val = f64::NEG_INFINITY;
    let mut no_improve = 0;
    let mut epochs = Vec::new();
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 0..cfg.max_epochs {
        let hard = curriculum.hard_fraction(epoch);
        let mut order = items.clone();
        order.shuffle(&mut rng::derive(seed, &[b"order", &(epoch as u64).to_le_bytes()]));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let n_params = model.params().len();
            let per_item = par_map(chunk, |&i| {
                let negs = negatives_for(&model, &train[i], hard, cfg, seed, epoch, i);
                let mut g = vec![0.0; n_params];
                let l = item_gradient(&model, &train[i], &negs, &mut g);
                (l, g)
            });
            let mut grad = vec![0.0; n_params];
            for (l, g) in &per_item {
                loss_sum += l;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let inv = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            if let Err(e) = adam.step(model.params_mut().values_mut(), &grad) {
                log::warn!("{family}: non-finite gradient at parameter {} in epoch {epoch}; stopping", e.index);
                stop = StopReason::NonFiniteGradient { epoch, index: e.index };
                break 'epochs;
            }
        }
        let train_mrr = batch_mrr(&model, &diag);
        let val_mrr = if val.is_empty() { train_mrr } else { batch_mrr(&model, &val) };
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / items.len() as f64,
            train_mrr,
            val_mrr,
            hard_fraction: hard,
        });
        log::debug!("{family} epoch {epoch}: loss {:.5} train {train_mrr:.4} val {val_mrr:.4}", loss_sum / items.len() as f64);
        if val_mrr > best_val {
            best_val = val_mrr;
            best_epoch = epoch;
            best = model.params().clone();
            no_improve = 0;
        } else {
            no_improve += 1;
            if no_improve >= cfg.patience.max(1) {
                stop = StopReason::EarlyStopping;
                break;
            }
        }
    }
    if epochs.is_empty() {
        best_val = 0.0;
    }
    *model.params_mut() = best;
    let config = cfg.to_map();
    let meta = TrainingMeta {
        seed,
        epochs: epochs.len(),
        best_epoch,
        best_val_mrr: best_val,
    };
    let ck = ModelCheckpoint::from_model(&model, &cfg.architecture, config.clone(), meta);
    let report = TrainRunReport {
        family,
        seed,
        epochs,
        best_epoch,
        best_val_mrr: best_val,
        stop_reason: stop,
        config,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((ck, report))
}

/// Order in which [`train_all`] trains and returns the families.
pub const TRAIN_ORDER: [Family; 5] = [
    Family::Cost,
    Family::Semantic,
    Family::S1Linear,
    Family::S1Nonlinear,
    Family::Discriminative,
];

/// Trains the five families in dependency order: cost and semantic, the
/// two S1 variants over those frozen bases, then discriminative.
pub fn train_all(
    train: &[FeatureBatch],
    val: &[FeatureBatch],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<(ModelCheckpoint, TrainRunReport)>, TrainError> {
    let cost = train_family(Family::Cost, train, val, Bases::none(), cfg, seed)?;
    let semantic = train_family(Family::Semantic, train, val, Bases::none(), cfg, seed)?;
    let c = match cost.0.to_model()? {
        Model::Cost(m) => m,
        _ => unreachable!("cost checkpoint holds a cost model"),
    };
    let s = match semantic.0.to_model()? {
        Model::Semantic(m) => m,
        _ => unreachable!("semantic checkpoint holds a semantic model"),
    };
    let bases = Bases {
        cost: Some(&c),
        semantic: Some(&s),
    };
    let lin = train_family(Family::S1Linear, train, val, bases, cfg, seed)?;
    let nonlin = train_family(Family::S1Nonlinear, train, val, bases, cfg, seed)?;
    let disc = train_family(Family::Discriminative, train, val, Bases::none(), cfg, seed)?;
    Ok(vec![cost, semantic, lin, nonlin, disc])
}
