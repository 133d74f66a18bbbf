//! Finite-difference check of analytic gradients on the pairwise loss.

use super::{pairwise_softplus_loss, Family, Model, Ranker};
use crate::features::FeatureBatch;

/// Gradients smaller than this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-3;

/// `|a - b| / max(|a|, |b|, GRAD_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub family: Family,
    pub n_params: usize,
    /// Worst error over every parameter, against the central difference or,
    /// at a kink, against the smooth one-sided slope.
    pub max_rel_err: f64,
    /// Parameters whose central difference straddled a rectifier kink.
    pub kinks: usize,
    /// Forward scores equal the scores returned by the backward pass.
    pub scores_consistent: bool,
}

fn loss_of(m: &Model, batch: &FeatureBatch, rows: &[usize]) -> f64 {
    let prep = m.prepare(batch);
    let s = m.score_rows(batch, &prep, rows);
    pairwise_softplus_loss(s[0], &s[1..]).loss
}

/// Compares the analytic gradient of the loss over every row of `batch`
/// (gold at `batch.gold_index`) with central differences of step `h`.
pub fn check_gradients(model: &Model, batch: &FeatureBatch, h: f64, tol: f64) -> GradCheck {
    let mut rows: Vec<usize> = vec![batch.gold_index];
    rows.extend(batch.valid_indices().filter(|&r| r != batch.gold_index));
    let prep = model.prepare(batch);
    let s = model.score_rows(batch, &prep, &rows);
    let l = pairwise_softplus_loss(s[0], &s[1..]);
    let mut up = vec![l.d_gold];
    up.extend_from_slice(&l.d_negatives);
    let mut grad = vec![0.0; model.params().len()];
    let back = model.backward_rows(batch, &prep, &rows, &up, &mut grad);
    let base = loss_of(model, batch, &rows);
    let mut worst = 0.0f64;
    let mut kinks = 0;
    for (k, &g) in grad.iter().enumerate() {
        let mut plus = model.clone();
        plus.params_mut().values_mut()[k] += h;
        let mut minus = model.clone();
        minus.params_mut().values_mut()[k] -= h;
        let (lp, lm) = (loss_of(&plus, batch, &rows), loss_of(&minus, batch, &rows));
        let central = relative_error(g, (lp - lm) / (2.0 * h));
        if central < tol {
            worst = worst.max(central);
            continue;
        }
        // A kink inside (x - h, x + h) makes the one-sided slopes disagree;
        // the analytic value must then match the smooth side.
        let (fwd, bwd) = ((lp - base) / h, (base - lm) / h);
        if relative_error(fwd, bwd) >= tol {
            kinks += 1;
            worst = worst.max(relative_error(g, fwd).min(relative_error(g, bwd)));
        } else {
            worst = worst.max(central);
        }
    }
    GradCheck {
        family: model.family(),
        n_params: grad.len(),
        max_rel_err: worst,
        kinks,
        scores_consistent: back == s,
    }
}
