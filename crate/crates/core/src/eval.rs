//! Ranking metrics and report tables.
//!
//! Ranks are pessimistic: the gold is placed after every candidate whose
//! score ties it. Metrics are accumulated in item order so results do not
//! depend on thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureBatch;
use crate::models::{Family, Ranker};
use crate::parallel::par_map;

pub const ACC_KS: [usize; 6] = [1, 5, 10, 20, 50, 100];
pub const LENGTH_KS: [usize; 6] = [1, 5, 10, 20, 50, 100];
pub const DEFAULT_LISTING_DEPTH: usize = 100;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("k = {k} exceeds retained listing depth {depth}")]
    ListingTooShallow { k: usize, depth: usize },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// 1 + strictly greater + ties (the gold itself excluded).
pub fn rank_gold(scores: &[f64], gold: usize) -> usize {
    let g = scores[gold];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| i != gold && s >= g)
        .count()
}

/// Mean reciprocal rank; 0 for an empty record set.
pub fn mrr(ranks: &[usize]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}

pub fn acc_at_k(ranks: &[usize], k: usize) -> f64 {
    assert!(k >= 1);
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

/// A test item ready for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub word: String,
    pub year: i32,
    pub batch: FeatureBatch,
    /// Rendered candidate per row; may be empty.
    pub labels: Vec<String>,
    pub gold_gated_out: bool,
}

impl EvalItem {
    pub fn from_batch(word: impl Into<String>, year: i32, batch: FeatureBatch) -> Self {
        Self {
            word: word.into(),
            year,
            batch,
            labels: Vec::new(),
            gold_gated_out: false,
        }
    }

    fn label(&self, row: usize) -> String {
        self.labels.get(row).cloned().unwrap_or_else(|| format!("#{row}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListedCandidate {
    pub row: usize,
    pub label: String,
    pub score: f64,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub word: String,
    pub year: i32,
    pub pool_size: usize,
    pub gold_rank: usize,
    pub gold_label: String,
    pub gold_gated_out: bool,
    /// Requested listing depth; `top` holds `min(depth, pool_size)` entries.
    pub listing_depth: usize,
    pub top: Vec<ListedCandidate>,
    /// Scores of the valid rows in row order.
    pub scores: Vec<f64>,
    /// Index of the gold within `scores`.
    pub gold_position: usize,
}

impl RankingRecord {
    /// Rank used in metrics: pessimistic pool size when the gold was gated out.
    pub fn effective_rank(&self) -> usize {
        if self.gold_gated_out {
            self.pool_size
        } else {
            self.gold_rank
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub family: Family,
    pub seed: u64,
    /// Items with the gold inside the gate.
    pub n_items: usize,
    pub mrr: f64,
    pub acc: Vec<(usize, f64)>,
    pub n_gated_out: usize,
    /// MRR over all items, gated-out golds ranked last.
    pub mrr_with_gated: f64,
}

impl MetricsReport {
    pub fn acc_at(&self, k: usize) -> Option<f64> {
        self.acc.iter().find(|(kk, _)| *kk == k).map(|(_, a)| *a)
    }
}

/// Scores one item and builds its record.
pub fn rank_item(model: &dyn Ranker, item: &EvalItem, depth: usize) -> RankingRecord {
    let b = &item.batch;
    let rows: Vec<usize> = b.valid_indices().collect();
    let prep = model.prepare(b);
    let row_scores = model.score_rows(b, &prep, &rows);
    let gold_pos = rows.iter().position(|&r| r == b.gold_index).expect("gold row is valid");
    let gold_rank = rank_gold(&row_scores, gold_pos);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&i, &j| row_scores[j].total_cmp(&row_scores[i]).then(i.cmp(&j)));
    let top = order
        .iter()
        .take(depth)
        .map(|&i| ListedCandidate {
            row: rows[i],
            label: item.label(rows[i]),
            score: row_scores[i],
            length: b.positions(rows[i]),
        })
        .collect();
    RankingRecord {
        word: item.word.clone(),
        year: item.year,
        pool_size: rows.len(),
        gold_rank,
        gold_label: item.label(b.gold_index),
        gold_gated_out: item.gold_gated_out,
        listing_depth: depth,
        top,
        scores: row_scores,
        gold_position: gold_pos,
    }
}

pub fn metrics_from_records(family: Family, seed: u64, records: &[RankingRecord]) -> MetricsReport {
    let in_gate: Vec<usize> = records.iter().filter(|r| !r.gold_gated_out).map(|r| r.gold_rank).collect();
    let all: Vec<usize> = records.iter().map(|r| r.effective_rank()).collect();
    MetricsReport {
        family,
        seed,
        n_items: in_gate.len(),
        mrr: mrr(&in_gate),
        acc: ACC_KS.iter().map(|&k| (k, acc_at_k(&in_gate, k))).collect(),
        n_gated_out: records.len() - in_gate.len(),
        mrr_with_gated: mrr(&all),
    }
}

/// Scores every item in parallel; records stay in item order.
pub fn evaluate(model: &dyn Ranker, items: &[EvalItem], seed: u64, depth: usize) -> (MetricsReport, Vec<RankingRecord>) {
    let records = par_map(items, |it| rank_item(model, it, depth));
    (metrics_from_records(model.family(), seed, &records), records)
}

/// MRR over batches without building records.
pub fn batch_mrr(model: &dyn Ranker, batches: &[FeatureBatch]) -> f64 {
    let ranks = par_map(batches, |b| {
        let rows: Vec<usize> = b.valid_indices().collect();
        let prep = model.prepare(b);
        let s = model.score_rows(b, &prep, &rows);
        rank_gold(&s, rows.iter().position(|&r| r == b.gold_index).expect("gold row is valid"))
    });
    mrr(&ranks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthCurve {
    pub ks: Vec<usize>,
    pub values: Vec<f64>,
}

/// Per k, mean over items of the mean candidate length among that item's top k.
pub fn length_curve(records: &[RankingRecord], ks: &[usize]) -> Result<LengthCurve, EvalError> {
    let mut values = Vec::with_capacity(ks.len());
    for &k in ks {
        if let Some(r) = records.iter().find(|r| k > r.listing_depth) {
            return Err(EvalError::ListingTooShallow { k, depth: r.listing_depth });
        }
        let per_item: Vec<f64> = records
            .iter()
            .filter(|r| !r.top.is_empty())
            .map(|r| {
                let top = &r.top[..k.min(r.top.len())];
                top.iter().map(|c| c.length as f64).sum::<f64>() / top.len() as f64
            })
            .collect();
        values.push(if per_item.is_empty() {
            0.0
        } else {
            per_item.iter().sum::<f64>() / per_item.len() as f64
        });
    }
    Ok(LengthCurve { ks: ks.to_vec(), values })
}

/// One line per item: word, gold position among scored rows, and the
/// scores in shortest round-trip decimal form.
pub fn dump_scores(records: &[RankingRecord]) -> String {
    let mut s = String::from("word\tgold_position\tscores\n");
    for r in records {
        let joined: Vec<String> = r.scores.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}\t{}\t{}", r.word, r.gold_position, joined.join(","));
    }
    s
}

/// One temporal sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalRow {
    pub end_year: i32,
    pub family: Option<Family>,
    pub seed: u64,
    pub skipped: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub mrr: f64,
    pub acc_at_10: f64,
}

/// Results of one trained family, one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyResult {
    pub report: MetricsReport,
    pub records: Vec<RankingRecord>,
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), EvalError> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|source| EvalError::Io { path, source })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// `temporal.tsv` body: one row per window, family and seed.
pub fn temporal_table(rows: &[TemporalRow]) -> String {
    let mut out = String::from("end_year\tfamily\tseed\tstatus\tn_train\tn_test\tmrr\tacc_at_10\n");
    for t in rows {
        let fam = t.family.map(|f| f.to_string()).unwrap_or_else(|| "-".into());
        let status = if t.skipped { "skipped" } else { "ok" };
        let _ = writeln!(
            out,
            "{}\t{fam}\t{}\t{status}\t{}\t{}\t{}\t{}",
            t.end_year,
            t.seed,
            t.n_train,
            t.n_test,
            fmt6(t.mrr),
            fmt6(t.acc_at_10)
        );
    }
    out
}

/// Writes `mrr.tsv`, `acc_at_k.tsv`, `length_curve.tsv`, `temporal.tsv`,
/// `qualitative.tsv` and `summary.tsv` under `out_dir`.
pub fn report_tables(results: &[FamilyResult], temporal: &[TemporalRow], out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(out_dir).map_err(|source| EvalError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut mrr_t = String::from("family\tseed\tn_items\tmrr\tn_gated_out\tmrr_with_gated\n");
    let mut acc_t = String::from("family\tseed\tk\tacc\n");
    let mut len_t = String::from("family\tseed\tk\tmean_length\n");
    let mut qual_t = String::from("family\tseed\tword\tyear\tgold\trank\tpool_size\ttop1\ttop1_score\ttop2\ttop2_score\ttop3\ttop3_score\n");
    for res in results {
        let r = &res.report;
        let _ = writeln!(
            mrr_t,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.family,
            r.seed,
            r.n_items,
            fmt6(r.mrr),
            r.n_gated_out,
            fmt6(r.mrr_with_gated)
        );
        for (k, a) in &r.acc {
            let _ = writeln!(acc_t, "{}\t{}\t{k}\t{}", r.family, r.seed, fmt6(*a));
        }
        let depth = res.records.iter().map(|x| x.listing_depth).min().unwrap_or(0);
        let ks: Vec<usize> = LENGTH_KS.iter().copied().filter(|&k| k <= depth).collect();
        if let Ok(curve) = length_curve(&res.records, &ks) {
            for (k, v) in curve.ks.iter().zip(&curve.values) {
                let _ = writeln!(len_t, "{}\t{}\t{k}\t{}", r.family, r.seed, fmt6(*v));
            }
        }
        for rec in &res.records {
            let _ = write!(
                qual_t,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.family, r.seed, rec.word, rec.year, rec.gold_label, rec.effective_rank(), rec.pool_size
            );
            for i in 0..3 {
                match rec.top.get(i) {
                    Some(c) => {
                        let _ = write!(qual_t, "\t{}\t{}", c.label, fmt6(c.score));
                    }
                    None => qual_t.push_str("\t\t"),
                }
            }
            qual_t.push('\n');
        }
    }
    let temp_t = temporal_table(temporal);
    let mut sum_t = String::from("family\truns\tmrr_mean\tmrr_std\tacc10_mean\tacc10_std\n");
    let mut families: Vec<Family> = results.iter().map(|r| r.report.family).collect();
    families.sort();
    families.dedup();
    for f in families {
        let runs: Vec<&MetricsReport> = results.iter().map(|r| &r.report).filter(|r| r.family == f).collect();
        let (mm, ms) = mean_std(&runs.iter().map(|r| r.mrr).collect::<Vec<_>>());
        let (am, asd) = mean_std(&runs.iter().map(|r| r.acc_at(10).unwrap_or(0.0)).collect::<Vec<_>>());
        let _ = writeln!(sum_t, "{f}\t{}\t{}\t{}\t{}\t{}", runs.len(), fmt6(mm), fmt6(ms), fmt6(am), fmt6(asd));
    }
    let files = [
        ("mrr.tsv", mrr_t),
        ("acc_at_k.tsv", acc_t),
        ("length_curve.tsv", len_t),
        ("temporal.tsv", temp_t),
        ("qualitative.tsv", qual_t),
        ("summary.tsv", sum_t),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        write(out_dir, name, &body)?;
        out.push(out_dir.join(name));
    }
    Ok(out)
}
