//! Semantic statistics and per-morpheme cost features, assembled into
//! padded, masked batches (one batch per candidate pool).

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{Candidate, CandidatePool};
use crate::embeddings::{self, EmbeddingError, EmbeddingProvider, NeighborIndex};
use crate::lexicon::{LexiconError, MorphemeId, TimeIndexedLexicon};

pub const SEM_DIM: usize = 5;
pub const COST_DIM: usize = 8;
pub const MAX_POSITIONS: usize = 3;
/// Trailing window for the windowed frequency features.
pub const FREQUENCY_WINDOW: i32 = 30;

pub const SEM_NAMES: [&str; SEM_DIM] = ["mean_sim", "max_sim", "std_sim", "entropy", "whole_sim"];
pub const COST_NAMES: [&str; COST_DIM] = [
    "char_len",
    "cum_type_freq",
    "cum_token_freq",
    "win30_token_freq",
    "standalone_freq",
    "win30_standalone_freq",
    "phoneme_count",
    "syllable_count",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no vector for morpheme {0}")]
    MissingMorpheme(MorphemeId),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticStats {
    pub mean_sim: f64,
    pub max_sim: f64,
    pub std_sim: f64,
    /// Shannon entropy in nats of softmax(similarities).
    pub entropy: f64,
    pub whole_sim: f64,
    /// Whether `whole_sim` came from the mean-vector fallback.
    pub whole_fallback: bool,
}

impl SemanticStats {
    pub fn to_array(&self) -> [f64; SEM_DIM] {
        [self.mean_sim, self.max_sim, self.std_sim, self.entropy, self.whole_sim]
    }

    /// Summary statistics over per-morpheme similarities; `whole_sim` supplied by the caller.
    pub fn from_similarities(sims: &[f64], whole_sim: f64, whole_fallback: bool) -> Self {
        assert!(!sims.is_empty(), "candidate without morphemes");
        let n = sims.len() as f64;
        let mean = sims.iter().sum::<f64>() / n;
        let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let var = sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        let z: f64 = sims.iter().map(|s| (s - max).exp()).sum();
        let entropy = -sims
            .iter()
            .map(|s| {
                let p = (s - max).exp() / z;
                if p > 0.0 {
                    p * p.ln()
                } else {
                    0.0
                }
            })
            .sum::<f64>();
        Self {
            mean_sim: mean,
            max_sim: max,
            std_sim: var.sqrt(),
            entropy: entropy.max(0.0),
            whole_sim,
            whole_fallback,
        }
    }
}

/// Semantic statistics for one candidate against a concept vector.
///
/// Morpheme vectors come from the neighbor index (already unit-normalized
/// `morpheme_vector`s). The whole-candidate vector is looked up under the
/// joined surface string and falls back to the normalized mean of the
/// morpheme vectors.
pub fn semantic_stats(
    candidate: &[MorphemeId],
    concept_vec: &[f64],
    index: &NeighborIndex,
    lexicon: &TimeIndexedLexicon,
    provider: &dyn EmbeddingProvider,
) -> Result<SemanticStats> {
    let concept = embeddings::normalized(concept_vec)?;
    let mut sims = Vec::with_capacity(candidate.len());
    let mut mean_vec = vec![0.0; index.dim()];
    for &m in candidate {
        let row = index.row_of(m).ok_or(FeatureError::MissingMorpheme(m))?;
        let v = index.vector(row);
        sims.push(embeddings::dot(v, &concept).clamp(-1.0, 1.0));
        mean_vec.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    let joined: String = candidate.iter().map(|&m| lexicon.surface(m)).collect();
    let (whole, fallback) = match provider.embed(&joined) {
        Some(v) if embeddings::norm(&v) > 0.0 => (embeddings::cosine(&v, &concept)?, false),
        _ => {
            let w = match embeddings::cosine(&mean_vec, &concept) {
                Ok(w) => w,
                // Morpheme vectors cancelled out exactly.
                Err(EmbeddingError::ZeroNorm) => 0.0,
                Err(e) => return Err(e.into()),
            };
            (w, true)
        }
    };
    Ok(SemanticStats::from_similarities(&sims, whole, fallback))
}

/// Median phoneme/syllable counts over the inventory, substituted for missing phonology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhonologyMedians {
    pub phonemes: f64,
    pub syllables: f64,
}

impl PhonologyMedians {
    pub fn from_lexicon(lexicon: &TimeIndexedLexicon) -> Self {
        fn median(mut v: Vec<f64>) -> f64 {
            if v.is_empty() {
                return 0.0;
            }
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            }
        }
        let ms = lexicon.morphemes();
        Self {
            phonemes: median(ms.iter().filter_map(|m| m.phoneme_count).map(f64::from).collect()),
            syllables: median(ms.iter().filter_map(|m| m.syllable_count).map(f64::from).collect()),
        }
    }
}

fn log_count(v: f64) -> f64 {
    v.max(0.0).ln_1p()
}

/// The eight time-indexed features of one morpheme at `year`.
pub fn cost_features(
    morpheme: MorphemeId,
    year: i32,
    lexicon: &TimeIndexedLexicon,
    medians: &PhonologyMedians,
) -> Result<[f64; COST_DIM]> {
    let m = lexicon.morpheme(morpheme)?;
    let cum = lexicon.cumulative_counts(morpheme, year)?;
    let win = lexicon.windowed_count(morpheme, year, FREQUENCY_WINDOW)?;
    Ok([
        m.surface.chars().count() as f64,
        log_count(cum.types as f64),
        log_count(cum.tokens as f64),
        log_count(win.tokens as f64),
        log_count(cum.standalone as f64),
        log_count(win.standalone as f64),
        m.phoneme_count.map_or(medians.phonemes, f64::from),
        m.syllable_count.map_or(medians.syllables, f64::from),
    ])
}

/// Padded features for one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBatch {
    pub sem: Vec<[f64; SEM_DIM]>,
    pub cost: Vec<[[f64; COST_DIM]; MAX_POSITIONS]>,
    pub mask: Vec<[bool; MAX_POSITIONS]>,
    /// Rows that take part in ranking; padding rows are `false`.
    pub valid: Vec<bool>,
    pub gold_index: usize,
    /// Whether a candidate shares at least one morpheme with the gold.
    pub overlaps_gold: Vec<bool>,
    pub whole_fallback: Vec<bool>,
}

impl FeatureBatch {
    pub fn len(&self) -> usize {
        self.sem.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sem.is_empty()
    }

    pub fn positions(&self, i: usize) -> usize {
        self.mask[i].iter().filter(|&&b| b).count()
    }

    /// Mean of the unmasked cost rows.
    pub fn masked_mean_cost(&self, i: usize) -> [f64; COST_DIM] {
        let mut out = [0.0; COST_DIM];
        let n = self.positions(i);
        if n == 0 {
            return out;
        }
        for (p, row) in self.cost[i].iter().enumerate() {
            if self.mask[i][p] {
                out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        out
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.valid[i])
    }

    /// Appends invalid zero rows up to `n` candidates.
    pub fn pad_to(&mut self, n: usize) {
        while self.len() < n {
            self.sem.push([0.0; SEM_DIM]);
            self.cost.push([[0.0; COST_DIM]; MAX_POSITIONS]);
            self.mask.push([false; MAX_POSITIONS]);
            self.valid.push(false);
            self.overlaps_gold.push(false);
            self.whole_fallback.push(false);
        }
    }

    /// Builds a batch from raw per-candidate rows; `cost[i]` holds one row per morpheme.
    pub fn from_rows(
        sem: Vec<[f64; SEM_DIM]>,
        cost: Vec<Vec<[f64; COST_DIM]>>,
        gold_index: usize,
        overlaps_gold: Vec<bool>,
    ) -> Self {
        assert_eq!(sem.len(), cost.len());
        assert!(gold_index < sem.len());
        let n = sem.len();
        let mut padded = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for rows in &cost {
            assert!((1..=MAX_POSITIONS).contains(&rows.len()));
            let mut t = [[0.0; COST_DIM]; MAX_POSITIONS];
            let mut m = [false; MAX_POSITIONS];
            for (p, r) in rows.iter().enumerate() {
                t[p] = *r;
                m[p] = true;
            }
            padded.push(t);
            mask.push(m);
        }
        Self {
            sem,
            cost: padded,
            mask,
            valid: vec![true; n],
            gold_index,
            overlaps_gold,
            whole_fallback: vec![true; n],
        }
    }

    /// One TSV row per candidate: semantic stats, 3x8 cost entries, mask bits.
    pub fn dump_tsv(&self) -> String {
        let mut out = String::from("index\tgold");
        for n in SEM_NAMES {
            let _ = write!(out, "\t{n}");
        }
        for p in 0..MAX_POSITIONS {
            for n in COST_NAMES {
                let _ = write!(out, "\tp{}_{n}", p + 1);
            }
        }
        for p in 0..MAX_POSITIONS {
            let _ = write!(out, "\tmask{}", p + 1);
        }
        out.push_str("\twhole_fallback\n");
        for i in 0..self.len() {
            let _ = write!(out, "{i}\t{}", u8::from(i == self.gold_index));
            for v in self.sem[i] {
                let _ = write!(out, "\t{v}");
            }
            for row in &self.cost[i] {
                for v in row {
                    let _ = write!(out, "\t{v}");
                }
            }
            for b in self.mask[i] {
                let _ = write!(out, "\t{}", u8::from(b));
            }
            let _ = writeln!(out, "\t{}", u8::from(self.whole_fallback[i]));
        }
        out
    }
}

/// Features for every candidate of a pool, in pool order.
pub fn assemble_batch(
    pool: &CandidatePool,
    lexicon: &TimeIndexedLexicon,
    index: &NeighborIndex,
    provider: &dyn EmbeddingProvider,
    concept_vec: &[f64],
    medians: &PhonologyMedians,
) -> Result<FeatureBatch> {
    let mut cache: HashMap<MorphemeId, [f64; COST_DIM]> = HashMap::new();
    let gold: &Candidate = pool.gold();
    let mut sem = Vec::with_capacity(pool.len());
    let mut cost = Vec::with_capacity(pool.len());
    let mut overlaps = Vec::with_capacity(pool.len());
    let mut fallback = Vec::with_capacity(pool.len());
    for c in &pool.candidates {
        let stats = semantic_stats(&c.morphemes, concept_vec, index, lexicon, provider)?;
        sem.push(stats.to_array());
        fallback.push(stats.whole_fallback);
        let mut rows = Vec::with_capacity(c.len());
        for &m in &c.morphemes {
            let row = match cache.get(&m) {
                Some(r) => *r,
                None => {
                    let r = cost_features(m, pool.year, lexicon, medians)?;
                    cache.insert(m, r);
                    r
                }
            };
            rows.push(row);
        }
        cost.push(rows);
        overlaps.push(c.shares_morpheme(gold));
    }
    let mut batch = FeatureBatch::from_rows(sem, cost, pool.gold_index, overlaps);
    batch.whole_fallback = fallback;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{EmbeddingTable, PseudoProvider};
    use crate::lexicon::{parse_inventory, Resolution};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_morpheme_stats() {
        let s = SemanticStats::from_similarities(&[1.0], 0.5, true);
        assert_eq!(s.to_array(), [1.0, 1.0, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn two_morpheme_stats() {
        let s = SemanticStats::from_similarities(&[0.8, 0.4], 0.0, true);
        assert!(close(s.mean_sim, 0.6, 1e-12));
        assert!(close(s.max_sim, 0.8, 1e-12));
        assert!(close(s.std_sim, 0.2, 1e-12));
        // softmax(0.8, 0.4) = (0.598688, 0.401312); H = 0.673540 nats.
        assert!(close(s.entropy, 0.673540, 1e-6), "{}", s.entropy);
    }

    #[test]
    fn uniform_stats() {
        let s = SemanticStats::from_similarities(&[0.3, 0.3, 0.3], 0.0, true);
        assert!(close(s.std_sim, 0.0, 1e-15));
        assert!(close(s.entropy, 3f64.ln(), 1e-12));
    }

    fn fixture() -> (TimeIndexedLexicon, NeighborIndex, EmbeddingTable) {
        let lex = parse_inventory("pan\tcooking vessel\t0\nsauce\t\t0\nzz\t\t0\n").unwrap();
        let (lex, _) = lex
            .attach_frequencies_str("pan\t1820\t1\t999\t4\nsauce\t1820\t2\t0\t0\n", Resolution::Decade, "f")
            .unwrap();
        let (lex, _) = lex.attach_pronunciations_str("PAN  P AE1 N\nSAUCE  S AO1 S\n", "cmu");
        let table = EmbeddingTable::parse("pan\t1 0 0\nsauce\t0 1 0\nzz\t0 0 1\nsaucepan\t0.6 0.8 0\n").unwrap();
        let index = NeighborIndex::from_lexicon(&lex, &table).unwrap();
        (lex, index, table)
    }

    #[test]
    fn cost_feature_values() {
        let (lex, _, _) = fixture();
        let med = PhonologyMedians::from_lexicon(&lex);
        let pan = cost_features(MorphemeId(0), 1900, &lex, &med).unwrap();
        assert_eq!(pan[0], 3.0);
        assert!(close(pan[2], 1000f64.ln(), 1e-12));
        assert!(close(pan[1], 2f64.ln(), 1e-12));
        // Window (1870, 1900] is empty.
        assert_eq!(pan[3], 0.0);
        assert_eq!(pan[6], 3.0);
        assert_eq!(pan[7], 1.0);
        let zz = cost_features(MorphemeId(2), 1900, &lex, &med).unwrap();
        assert_eq!(&zz[1..6], &[0.0; 5]);
        // Median of {3, 3}.
        assert_eq!(zz[6], 3.0);
        assert!(cost_features(MorphemeId(7), 1900, &lex, &med).is_err());
    }

    #[test]
    fn whole_sim_lookup_and_fallback() {
        let (lex, index, table) = fixture();
        let concept = [1.0, 1.0, 0.0];
        let s = semantic_stats(&[MorphemeId(1), MorphemeId(0)], &concept, &index, &lex, &table).unwrap();
        assert!(!s.whole_fallback);
        assert!(close(s.whole_sim, 1.4 / 2f64.sqrt(), 1e-12));
        let r = semantic_stats(&[MorphemeId(0), MorphemeId(1)], &concept, &index, &lex, &table).unwrap();
        assert!(r.whole_fallback);
        assert!(close(r.whole_sim, 1.0, 1e-12));
        assert_eq!(r.mean_sim, s.mean_sim);
        assert_eq!(r.entropy, s.entropy);
    }

    #[test]
    fn batch_padding_and_determinism() {
        let (lex, index, table) = fixture();
        let med = PhonologyMedians::from_lexicon(&lex);
        let pool = CandidatePool {
            word: "saucepan".into(),
            year: 1900,
            candidates: vec![
                Candidate { morphemes: vec![MorphemeId(1), MorphemeId(0)], is_gold: true },
                Candidate { morphemes: vec![MorphemeId(2)], is_gold: false },
            ],
            gold_index: 0,
            gold_gated_out: false,
            gold_inserted: false,
            enumerated: 0,
        };
        let b = assemble_batch(&pool, &lex, &index, &table, &[0.0, 1.0, 1.0], &med).unwrap();
        assert_eq!(b.mask[0], [true, true, false]);
        assert_eq!(b.cost[0][2], [0.0; COST_DIM]);
        assert_eq!(b.overlaps_gold, vec![true, false]);
        let again = assemble_batch(&pool, &lex, &index, &table, &[0.0, 1.0, 1.0], &med).unwrap();
        assert_eq!(b.dump_tsv(), again.dump_tsv());
        assert_eq!(b.dump_tsv().lines().count(), 3);
        assert_eq!(b.dump_tsv().lines().next().unwrap().split('\t').count(), 2 + 5 + 24 + 3 + 1);

        let single = CandidatePool { candidates: vec![pool.candidates[0].clone()], ..pool };
        let b = assemble_batch(&single, &lex, &index, &PseudoProvider { dim: 3, seed: 0 }, &[0.0, 1.0, 1.0], &med).unwrap();
        assert_eq!((b.len(), b.gold_index), (1, 0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stats_invariants(sims in proptest::collection::vec(-1.0f64..1.0, 1..=3)) {
                let s = SemanticStats::from_similarities(&sims, 0.0, true);
                prop_assert!(s.max_sim >= s.mean_sim - 1e-15);
                prop_assert!(s.std_sim >= 0.0 && s.entropy >= 0.0);
                prop_assert!(s.entropy <= (sims.len() as f64).ln() + 1e-12);
                let mut rev = sims.clone();
                rev.reverse();
                let r = SemanticStats::from_similarities(&rev, 0.0, true);
                prop_assert!((r.mean_sim - s.mean_sim).abs() < 1e-12);
                prop_assert!((r.entropy - s.entropy).abs() < 1e-12);
                prop_assert!((r.std_sim - s.std_sim).abs() < 1e-12);
            }

            #[test]
            fn fallback_whole_sim_permutation_invariant(order in Just(vec![0u32, 1, 2]).prop_shuffle()) {
                let lex = parse_inventory("a\t\t0\nb\t\t0\nc\t\t0\n").unwrap();
                let p = PseudoProvider { dim: 8, seed: 3 };
                // Table without joined strings forces the fallback path.
                let table = EmbeddingTable::from_rows(["a", "b", "c"].iter().map(|k| (k.to_string(), crate::embeddings::pseudo_embedding(k, 8, 3)))).unwrap();
                let index = NeighborIndex::from_lexicon(&lex, &p).unwrap();
                let concept = crate::embeddings::pseudo_embedding("concept", 8, 3);
                let base = semantic_stats(&[MorphemeId(0), MorphemeId(1), MorphemeId(2)], &concept, &index, &lex, &table).unwrap();
                let ids: Vec<MorphemeId> = order.iter().map(|&i| MorphemeId(i)).collect();
                let perm = semantic_stats(&ids, &concept, &index, &lex, &table).unwrap();
                prop_assert!(perm.whole_fallback);
                for (x, y) in base.to_array().iter().zip(perm.to_array()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }

            #[test]
            fn cost_features_monotone(a in 0u64..10_000, extra in 0u64..10_000) {
                let lex = parse_inventory("m\t\t0\n").unwrap();
                let med = PhonologyMedians { phonemes: 0.0, syllables: 0.0 };
                let f = |t: u64| {
                    let (l, _) = lex.clone().attach_frequencies_str(&format!("m\t1900\t{t}\t{t}\t{t}\n"), Resolution::Year, "f").unwrap();
                    cost_features(MorphemeId(0), 1910, &l, &med).unwrap()
                };
                let (lo, hi) = (f(a), f(a + extra));
                for k in 1..6 {
                    prop_assert!(lo[k] <= hi[k]);
                }
            }
        }
    }
}
