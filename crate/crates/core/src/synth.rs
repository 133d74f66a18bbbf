//! Synthetic corpora with a known ground truth.
//!
//! Each planted concept owns a small morpheme vocabulary. Morpheme `j` has
//! a similarity `s_j` to the concept and a latent production cost `c_j`;
//! its eight cost features are noisy affine images of `c_j`. A candidate
//! `u` has planted utility `U*(u) = w_sem * mean_j s_j - w_cost * sum_j c_j`
//! and the gold is the argmax of `U*` plus Gaussian noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{FeatureBatch, SemanticStats, COST_DIM, MAX_POSITIONS, SEM_DIM};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub n_concepts: usize,
    pub pool_size: usize,
    pub vocab: usize,
    pub w_sem: f64,
    pub w_cost: f64,
    /// Standard deviation of the utility noise that picks the gold.
    pub noise: f64,
    /// Standard deviation of the per-feature cost measurement noise.
    pub feature_noise: f64,
    /// Standard deviation of whole-candidate similarity around the mean.
    pub whole_noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_concepts: 500,
            pool_size: 64,
            vocab: 24,
            w_sem: 1.0,
            w_cost: 0.7,
            noise: 0.05,
            feature_noise: 0.05,
            whole_noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub batches: Vec<FeatureBatch>,
    pub years: Vec<i32>,
    /// Noise-free planted utility per candidate.
    pub utility: Vec<Vec<f64>>,
    /// Planted semantic term (mean similarity) per candidate.
    pub sem_term: Vec<Vec<f64>>,
    /// Planted cost term (sum of latent costs) per candidate.
    pub cost_term: Vec<Vec<f64>>,
}

/// Box-Muller standard normal draw.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fixed per-corpus map from latent cost to the eight features.
fn feature_map(seed: u64) -> [(f64, f64); COST_DIM] {
    let mut r = rng::derive_str(seed, "synth.features", 0);
    let mut m = [(0.0, 0.0); COST_DIM];
    for (a, b) in m.iter_mut() {
        *a = r.gen_range(0.5..2.0);
        *b = r.gen_range(-1.0..1.0);
    }
    m
}

fn sample_pool(cfg: &PlantedConfig, r: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(cfg.pool_size);
    let capacity: usize = (1..=MAX_POSITIONS).map(|m| cfg.vocab.pow(m as u32)).sum();
    assert!(cfg.pool_size <= capacity, "pool larger than the sequence space");
    while out.len() < cfg.pool_size {
        let m = r.gen_range(1..=MAX_POSITIONS);
        let seq: Vec<usize> = (0..m).map(|_| r.gen_range(0..cfg.vocab)).collect();
        if seen.insert(seq.clone()) {
            out.push(seq);
        }
    }
    out
}

pub fn planted_corpus(cfg: &PlantedConfig) -> PlantedCorpus {
    let fmap = feature_map(cfg.seed);
    let mut corpus = PlantedCorpus {
        batches: Vec::with_capacity(cfg.n_concepts),
        years: Vec::with_capacity(cfg.n_concepts),
        utility: Vec::new(),
        sem_term: Vec::new(),
        cost_term: Vec::new(),
    };
    for c in 0..cfg.n_concepts {
        let mut r = rng::derive_str(cfg.seed, "synth.concept", c as u64);
        let sims: Vec<f64> = (0..cfg.vocab).map(|_| r.gen_range(-0.2..0.9)).collect();
        let costs: Vec<f64> = (0..cfg.vocab).map(|_| r.gen_range(0.0..1.0)).collect();
        let feats: Vec<[f64; COST_DIM]> = costs
            .iter()
            .map(|&cj| {
                let mut f = [0.0; COST_DIM];
                for (k, (a, b)) in fmap.iter().enumerate() {
                    f[k] = a * cj + b + cfg.feature_noise * standard_normal(&mut r);
                }
                f
            })
            .collect();
        let pool = sample_pool(cfg, &mut r);
        let mut sem = Vec::with_capacity(pool.len());
        let mut cost = Vec::with_capacity(pool.len());
        let mut util = Vec::with_capacity(pool.len());
        let mut st = Vec::with_capacity(pool.len());
        let mut ct = Vec::with_capacity(pool.len());
        let mut noisy = Vec::with_capacity(pool.len());
        for seq in &pool {
            let s: Vec<f64> = seq.iter().map(|&j| sims[j]).collect();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let whole = (mean + cfg.whole_noise * standard_normal(&mut r)).clamp(-1.0, 1.0);
            sem.push(SemanticStats::from_similarities(&s, whole, false).to_array());
            cost.push(seq.iter().map(|&j| feats[j]).collect::<Vec<_>>());
            let total_cost: f64 = seq.iter().map(|&j| costs[j]).sum();
            let u = cfg.w_sem * mean - cfg.w_cost * total_cost;
            st.push(mean);
            ct.push(total_cost);
            util.push(u);
            noisy.push(u + cfg.noise * standard_normal(&mut r));
        }
        let gold = (0..pool.len()).max_by(|&a, &b| noisy[a].total_cmp(&noisy[b]).then(b.cmp(&a))).unwrap();
        let overlaps = pool.iter().map(|seq| seq.iter().any(|j| pool[gold].contains(j))).collect();
        corpus.batches.push(FeatureBatch::from_rows(sem, cost, gold, overlaps));
        corpus.years.push(1900 + r.gen_range(0..100));
        corpus.utility.push(util);
        corpus.sem_term.push(st);
        corpus.cost_term.push(ct);
    }
    corpus
}

/// Random batch with mixed candidate lengths and the gold at row 0.
pub fn random_batch(n: usize, seed: u64) -> FeatureBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sem = (0..n)
        .map(|_| {
            let mut s = [0.0; SEM_DIM];
            s.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            s
        })
        .collect();
    let cost = (0..n)
        .map(|_| {
            let m = rng.gen_range(1..=MAX_POSITIONS);
            (0..m)
                .map(|_| {
                    let mut r = [0.0; COST_DIM];
                    r.iter_mut().for_each(|v| *v = rng.gen_range(0.0..4.0));
                    r
                })
                .collect()
        })
        .collect();
    let overlaps = (0..n).map(|i| i == 0 || rng.gen_bool(0.3)).collect();
    FeatureBatch::from_rows(sem, cost, 0, overlaps)
}

/// Item counts per year, 1820..=2019, summing to `total`.
///
/// Sparse early decades, growth through the nineteenth century and a
/// plateau with a mid-twentieth-century bulge; year-to-year jitter is
/// seeded so the shape is fixed.
pub fn corpus_year_histogram(total: usize) -> Vec<(i32, usize)> {
    let mut r = rng::derive_str(0, "synth.years", 0);
    let years: Vec<i32> = (1820..=2019).collect();
    let weights: Vec<f64> = years
        .iter()
        .map(|&y| {
            let t = (y - 1820) as f64 / 199.0;
            let growth = 0.2 + 1.6 / (1.0 + (-(t - 0.35) * 10.0).exp());
            let bulge = 0.8 * (-((t - 0.65) / 0.12).powi(2)).exp();
            (growth + bulge) * r.gen_range(0.6..1.4)
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut rema: Vec<(usize, f64)> = exact.iter().enumerate().map(|(i, x)| (i, x - x.floor())).collect();
    rema.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let missing = total - counts.iter().sum::<usize>();
    for &(i, _) in rema.iter().take(missing) {
        counts[i] += 1;
    }
    years.into_iter().zip(counts).collect()
}

/// One year per item, in shuffled order.
pub fn years_from_histogram(hist: &[(i32, usize)], seed: u64) -> Vec<i32> {
    let mut v: Vec<i32> = hist.iter().flat_map(|&(y, n)| std::iter::repeat_n(y, n)).collect();
    v.shuffle(&mut rng::derive_str(seed, "synth.year_order", 0));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_gold_is_near_the_utility_argmax() {
        let cfg = PlantedConfig {
            n_concepts: 50,
            ..PlantedConfig::default()
        };
        let c = planted_corpus(&cfg);
        assert_eq!(c.batches.len(), 50);
        let mut exact = 0;
        for (b, u) in c.batches.iter().zip(&c.utility) {
            assert_eq!(b.len(), 64);
            let best = (0..u.len()).max_by(|&x, &y| u[x].total_cmp(&u[y])).unwrap();
            exact += usize::from(best == b.gold_index);
            assert!(b.overlaps_gold[b.gold_index]);
        }
        assert!(exact >= 35, "{exact}");
        assert_eq!(planted_corpus(&cfg), c);
    }

    #[test]
    fn histogram_sums() {
        let h = corpus_year_histogram(4323);
        assert_eq!(h.len(), 200);
        assert_eq!(h.iter().map(|(_, n)| n).sum::<usize>(), 4323);
        assert_eq!(years_from_histogram(&h, 1).len(), 4323);
    }
}
