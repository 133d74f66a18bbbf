use super::config::TrainConfig;
use super::split::Split;
use super::trainer::{train_all, TrainError, TrainRunReport, TRAIN_ORDER};
use crate::eval::{evaluate, EvalItem, MetricsReport, TemporalRow, DEFAULT_LISTING_DEPTH};
use crate::features::FeatureBatch;

/// Windows with fewer training items than this are skipped.
pub const MIN_WINDOW_TRAIN: usize = 20;

/// Per-item inputs shared by all windows, indexed like `years`.
#[derive(Debug, Clone, Copy)]
pub struct WindowData<'a> {
    pub years: &'a [i32],
    pub train_batches: &'a [FeatureBatch],
    pub eval_items: &'a [EvalItem],
    pub split: &'a Split,
    /// Items whose gold survived the gate.
    pub trainable: &'a [bool],
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub end_year: i32,
    pub n_train: usize,
    pub n_test: usize,
    pub skipped: bool,
    pub runs: Vec<(TrainRunReport, MetricsReport)>,
}

impl WindowOutcome {
    /// One row per family; a skipped window still yields a row for each.
    pub fn rows(&self, seed: u64) -> Vec<TemporalRow> {
        if self.skipped {
            return TRAIN_ORDER
                .iter()
                .map(|&f| TemporalRow {
                    end_year: self.end_year,
                    family: Some(f),
                    seed,
                    skipped: true,
                    n_train: self.n_train,
                    n_test: self.n_test,
                    mrr: 0.0,
                    acc_at_10: 0.0,
                })
                .collect();
        }
        self.runs
            .iter()
            .map(|(_, m)| TemporalRow {
                end_year: self.end_year,
                family: Some(m.family),
                seed,
                skipped: false,
                n_train: self.n_train,
                n_test: self.n_test,
                mrr: m.mrr,
                acc_at_10: m.acc_at(10).unwrap_or(0.0),
            })
            .collect()
    }
}

/// Retrains all five families on each cumulative window `t <= end_year`
/// and evaluates on the held-out items of the same window.
pub fn temporal_window_runs(
    data: WindowData<'_>,
    end_years: &[i32],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<WindowOutcome>, TrainError> {
    assert!(end_years.windows(2).all(|w| w[0] < w[1]), "end years must ascend");
    let within = |ids: &[usize], y: i32, need_gate: bool| -> Vec<usize> {
        ids.iter()
            .copied()
            .filter(|&i| data.years[i] <= y && (!need_gate || data.trainable[i]))
            .collect()
    };
    let mut out = Vec::with_capacity(end_years.len());
    for &y in end_years {
        let train_ids = within(&data.split.train, y, true);
        let val_ids = within(&data.split.val, y, true);
        let test_ids = within(&data.split.test, y, false);
        if train_ids.len() < MIN_WINDOW_TRAIN {
            log::info!("window ending {y}: {} training items, skipped", train_ids.len());
            out.push(WindowOutcome {
                end_year: y,
                n_train: train_ids.len(),
                n_test: test_ids.len(),
                skipped: true,
                runs: Vec::new(),
            });
            continue;
        }
        let train: Vec<FeatureBatch> = train_ids.iter().map(|&i| data.train_batches[i].clone()).collect();
        let val: Vec<FeatureBatch> = val_ids.iter().map(|&i| data.train_batches[i].clone()).collect();
        let test: Vec<EvalItem> = test_ids.iter().map(|&i| data.eval_items[i].clone()).collect();
        let mut runs = Vec::new();
        for (ck, report) in train_all(&train, &val, cfg, seed)? {
            let model = ck.to_model()?;
            let (metrics, _) = evaluate(&model, &test, seed, DEFAULT_LISTING_DEPTH);
            runs.push((report, metrics));
        }
        out.push(WindowOutcome {
            end_year: y,
            n_train: train_ids.len(),
            n_test: test_ids.len(),
            skipped: false,
            runs,
        });
    }
    Ok(out)
}

/// `first, first + step, ..., <= last`.
pub fn window_end_years(first: i32, last: i32, step: i32) -> Vec<i32> {
    assert!(step > 0);
    (first..=last).step_by(step as usize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::random_batch;
    use crate::training::split::{year_stratified_split, SplitSpec};

    #[test]
    fn nine_windows() {
        assert_eq!(window_end_years(1830, 1910, 10).len(), 9);
    }

    #[test]
    fn windows_before_all_data_are_skipped() {
        let years: Vec<i32> = (0..40).map(|i| 1900 + i % 4).collect();
        let batches: Vec<FeatureBatch> = (0..40).map(|i| random_batch(6, i)).collect();
        let items: Vec<EvalItem> = batches.iter().map(|b| EvalItem::from_batch("w", 1900, b.clone())).collect();
        let split = year_stratified_split(&years, &SplitSpec::default());
        let trainable = vec![true; 40];
        let data = WindowData {
            years: &years,
            train_batches: &batches,
            eval_items: &items,
            split: &split,
            trainable: &trainable,
        };
        let out = temporal_window_runs(data, &[1800, 1850], &TrainConfig::default(), 0).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|w| w.skipped && w.n_train == 0));
        assert_eq!(out[0].rows(0).len(), 5);
    }
}
