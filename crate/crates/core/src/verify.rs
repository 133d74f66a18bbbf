//! Self-checks against brute-force oracles on randomized fixtures.
//!
//! Each check regenerates its fixtures from a seed, evaluates them with the
//! production code path and an independent recomputation, and reports every
//! disagreement. Nothing here is used by the pipeline itself.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::candidates::{enumerate_candidates, enumerate_sequences, gate, knn_set, GateConfig, SeedSet};
use crate::embeddings::NeighborIndex;
use crate::eval::{dump_scores, evaluate, EvalItem, ACC_KS, DEFAULT_LISTING_DEPTH};
use crate::features::FeatureBatch;
use crate::lexicon::{ConceptItem, MorphemeId, TimeIndexedLexicon};
use crate::models::{
    check_gradients, Architecture, CostModel, DiscriminativeModel, Family, Model, Ranker, S1Model, S1Variant,
    SemanticModel, SemanticNorm,
};
use crate::synth::{corpus_year_histogram, planted_corpus, random_batch, years_from_histogram, PlantedConfig};
use crate::training::{test_count, train_all, year_stratified_split, SplitSpec, TrainConfig};

/// Fixture count and one message per disagreement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckOutcome {
    pub fixtures: usize,
    pub failures: Vec<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.fixtures > 0 && self.failures.is_empty()
    }

    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }
}

/// One model per family; odd seeds use layer normalization in the semantic base.
pub fn family_models(seed: u64, arch: &Architecture) -> Vec<Model> {
    let norm = if seed.is_multiple_of(2) { SemanticNorm::Feature } else { SemanticNorm::Layer };
    let cost = CostModel::new(&arch.cost_hidden, seed);
    let sem = SemanticModel::new(&arch.semantic_hidden, norm, seed + 1);
    vec![
        Model::Cost(cost.clone()),
        Model::Semantic(sem.clone()),
        Model::Discriminative(DiscriminativeModel::new(&arch.discriminative_hidden, seed + 2)),
        Model::S1(S1Model::new(S1Variant::Linear, cost.clone(), sem.clone(), &arch.s1_hidden, seed + 3)),
        Model::S1(S1Model::new(S1Variant::Nonlinear, cost, sem, &arch.s1_hidden, seed + 4)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSummary {
    pub outcome: CheckOutcome,
    /// Worst relative error per family over all seeds.
    pub max_rel_err: BTreeMap<Family, f64>,
}

/// Finite-difference check of every family on `seeds` random batches.
pub fn gradient_check(seeds: u64, h: f64, tol: f64) -> GradientSummary {
    let mut out = GradientSummary {
        outcome: CheckOutcome::default(),
        max_rel_err: BTreeMap::new(),
    };
    let arch = Architecture::default();
    for seed in 0..seeds {
        let batch = random_batch(9, 100 + seed);
        for m in family_models(seed, &arch) {
            let r = check_gradients(&m, &batch, h, tol);
            out.outcome.fixtures += 1;
            let worst = out.max_rel_err.entry(r.family).or_insert(0.0);
            *worst = worst.max(r.max_rel_err);
            if !r.scores_consistent || r.max_rel_err >= tol {
                out.outcome.fail(format!("{} seed {seed}: {r:?}", r.family));
            }
        }
    }
    out
}

/// A batch with tied duplicate rows, padding and a random gold row.
fn metric_fixture(rng: &mut ChaCha8Rng, id: u64) -> FeatureBatch {
    let n = rng.gen_range(2..80);
    let mut b = random_batch(n, 10_000 + id);
    for _ in 0..rng.gen_range(0..4) {
        let (from, to) = (rng.gen_range(0..n), rng.gen_range(0..n));
        b.sem[to] = b.sem[from];
        b.cost[to] = b.cost[from];
        b.mask[to] = b.mask[from];
    }
    b.gold_index = rng.gen_range(0..n);
    let pad = rng.gen_range(0..5);
    b.pad_to(n + pad);
    b
}

/// `evaluate` against a recomputation from the dumped raw scores.
pub fn metric_oracle(n_fixtures: usize, seed: u64) -> CheckOutcome {
    let mut out = CheckOutcome::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = Architecture::default();
    for f in 0..n_fixtures {
        let models = family_models(seed + f as u64, &arch);
        let model = &models[rng.gen_range(0..models.len())];
        let n_items = rng.gen_range(1..12);
        let items: Vec<EvalItem> = (0..n_items)
            .map(|i| {
                let mut it = EvalItem::from_batch(format!("w{i}"), 1900, metric_fixture(&mut rng, (f * 100 + i) as u64));
                it.gold_gated_out = rng.gen_bool(0.15);
                it
            })
            .collect();
        let (report, records) = evaluate(model, &items, seed, DEFAULT_LISTING_DEPTH);
        out.fixtures += 1;

        let mut ranks = Vec::new();
        let mut all_ranks = Vec::new();
        for (line, item) in dump_scores(&records).lines().skip(1).zip(&items) {
            let cols: Vec<&str> = line.split('\t').collect();
            let gold: usize = cols[1].parse().expect("gold position");
            let scores: Vec<f64> = cols[2].split(',').map(|x| x.parse().expect("score")).collect();
            let mut rank = 1;
            for (j, s) in scores.iter().enumerate() {
                if j != gold && *s >= scores[gold] {
                    rank += 1;
                }
            }
            if item.gold_gated_out {
                all_ranks.push(scores.len());
            } else {
                ranks.push(rank);
                all_ranks.push(rank);
            }
        }
        let recip = |rs: &[usize]| {
            if rs.is_empty() {
                return 0.0;
            }
            let mut sum = 0.0;
            for &r in rs {
                sum += 1.0 / r as f64;
            }
            sum / rs.len() as f64
        };
        let expect_mrr = recip(&ranks);
        if report.mrr.to_bits() != expect_mrr.to_bits() {
            out.fail(format!("fixture {f}: mrr {} vs oracle {expect_mrr}", report.mrr));
        }
        let expect_gated = recip(&all_ranks);
        if report.mrr_with_gated.to_bits() != expect_gated.to_bits() {
            out.fail(format!("fixture {f}: mrr_with_gated {} vs oracle {expect_gated}", report.mrr_with_gated));
        }
        for &k in &ACC_KS {
            let hits = ranks.iter().filter(|&&r| r <= k).count();
            let expect = if ranks.is_empty() { 0.0 } else { hits as f64 / ranks.len() as f64 };
            if report.acc_at(k).map(f64::to_bits) != Some(expect.to_bits()) {
                out.fail(format!("fixture {f}: acc@{k} {:?} vs oracle {expect}", report.acc_at(k)));
            }
        }
    }
    out
}

fn numbered_lexicon(n: usize) -> TimeIndexedLexicon {
    let surfaces: Vec<String> = (0..n).map(|i| format!("m{i:03}")).collect();
    TimeIndexedLexicon::from_entries(surfaces.into_iter().map(|s| (s, None, true))).expect("valid surfaces")
}

fn oracle_knn(vectors: &[(MorphemeId, String, Vec<f64>)], query: &[f64], k: usize, available: &[bool]) -> HashSet<MorphemeId> {
    let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, &str, MorphemeId)> = vectors
        .iter()
        .filter(|(id, _, _)| available[id.index()])
        .map(|(id, key, v)| {
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let d: f64 = v.iter().zip(query).map(|(a, b)| a * b).sum();
            (d / (vn * qn), key.as_str(), *id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, _, id)| id).collect()
}

/// Gate decisions and pool membership against exhaustive kNN membership.
pub fn gate_oracle(n_fixtures: usize, seed: u64) -> CheckOutcome {
    let mut out = CheckOutcome::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for f in 0..n_fixtures {
        let n = rng.gen_range(20..100);
        let dim = 6;
        let lex = numbered_lexicon(n);
        let mut vectors: Vec<(MorphemeId, String, Vec<f64>)> = (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (MorphemeId(i as u32), lex.surface(MorphemeId(i as u32)).to_string(), v)
            })
            .collect();
        // Exact duplicates exercise the key tie-break.
        for _ in 0..3 {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            vectors[b].2 = vectors[a].2.clone();
        }
        let available: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.75)).collect();
        let query: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = rng.gen_range(1..=n);
        let index = NeighborIndex::new(vectors.clone()).expect("index");
        let knn = knn_set(&index, &query, k, |id| available[id.index()]).expect("knn");
        let expect = oracle_knn(&vectors, &query, k, &available);
        out.fixtures += 1;
        if knn != expect {
            out.fail(format!("fixture {f}: kNN set differs from the exhaustive ranking"));
            continue;
        }
        for _ in 0..100 {
            let len = rng.gen_range(1..=3);
            let cand: Vec<MorphemeId> = (0..len).map(|_| MorphemeId(rng.gen_range(0..n) as u32)).collect();
            if gate(&cand, &knn) != cand.iter().all(|m| expect.contains(m)) {
                out.fail(format!("fixture {f}: gate decision differs for {cand:?}"));
            }
        }

        let mut ids: Vec<MorphemeId> = (0..n as u32).map(MorphemeId).collect();
        ids.shuffle(&mut rng);
        let seeds: BTreeSet<MorphemeId> = ids.into_iter().take(rng.gen_range(1..8)).collect();
        let gold: Vec<MorphemeId> = seeds.iter().copied().take(2).collect();
        let item = ConceptItem {
            word: format!("c{f}"),
            gloss: String::new(),
            gold: gold.clone(),
            emergence_year: 1900,
            pos: None,
        };
        let seed_set = SeedSet {
            morpheme_ids: seeds.clone(),
            ..SeedSet::default()
        };
        let cfg = GateConfig {
            gate_k: k,
            max_len: 3,
            per_concept_cap: 1 << 20,
            max_surface_len: 100,
        };
        let pool = enumerate_candidates(&seed_set, &item, &cfg, &knn, &lex, |m| -(m.0 as f64));
        let mut expected: BTreeSet<Vec<MorphemeId>> = BTreeSet::new();
        let s: Vec<MorphemeId> = seeds.iter().copied().collect();
        for &a in &s {
            for len in 1..=3 {
                let mut seqs = vec![vec![a]];
                for _ in 1..len {
                    seqs = seqs.into_iter().flat_map(|p| s.iter().map(move |&m| [p.clone(), vec![m]].concat())).collect();
                }
                expected.extend(seqs.into_iter().filter(|q| q.iter().all(|m| expect.contains(m))));
            }
        }
        expected.insert(gold.clone());
        let got: BTreeSet<Vec<MorphemeId>> = pool.candidates.iter().map(|c| c.morphemes.clone()).collect();
        if got != expected || got.len() != pool.len() {
            out.fail(format!("fixture {f}: pool membership differs from brute force ({} vs {})", got.len(), expected.len()));
        }
        if pool.gold_gated_out == gold.iter().all(|m| expect.contains(m)) {
            out.fail(format!("fixture {f}: gold gate flag wrong"));
        }
    }
    out
}

/// Pre-cap enumeration counts equal `sum_{m=1..3} n^m` for `n` seeds, `n <= max_seeds`.
pub fn enumeration_oracle(max_seeds: usize) -> CheckOutcome {
    let mut out = CheckOutcome::default();
    for n in 1..=max_seeds {
        let lex = numbered_lexicon(n);
        let ids: Vec<MorphemeId> = (0..n as u32).map(MorphemeId).collect();
        let mut brute = 0u64;
        for _a in 0..n {
            brute += 1;
            for _b in 0..n {
                brute += 1;
                for _c in 0..n {
                    brute += 1;
                }
            }
        }
        out.fixtures += 1;
        let seqs = enumerate_sequences(&ids, 3);
        let distinct: HashSet<&Vec<MorphemeId>> = seqs.iter().collect();
        if seqs.len() as u64 != brute || distinct.len() != seqs.len() {
            out.fail(format!("{n} seeds: {} sequences ({} distinct), expected {brute}", seqs.len(), distinct.len()));
        }
        // Half the seeds outside the gate: the pre-cap count is unchanged.
        let knn: HashSet<MorphemeId> = ids.iter().copied().take(n.div_ceil(2)).collect();
        let item = ConceptItem {
            word: "x".into(),
            gloss: String::new(),
            gold: vec![ids[0]],
            emergence_year: 1900,
            pos: None,
        };
        let seed_set = SeedSet {
            morpheme_ids: ids.iter().copied().collect(),
            ..SeedSet::default()
        };
        for cap in [1, 4096] {
            let cfg = GateConfig {
                gate_k: n,
                max_len: 3,
                per_concept_cap: cap,
                max_surface_len: 100,
            };
            let pool = enumerate_candidates(&seed_set, &item, &cfg, &knn, &lex, |_| 0.0);
            if pool.enumerated != brute {
                out.fail(format!("{n} seeds, cap {cap}: enumerated {} expected {brute}", pool.enumerated));
            }
        }
    }
    out
}

fn ranking(scores: &[f64], valid: &[bool]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| valid[i]).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    idx
}

/// Linear S1 with unit weight on one base reproduces that base's pool ranking.
pub fn reduction_identities(n_fixtures: usize, seed: u64) -> CheckOutcome {
    let mut out = CheckOutcome::default();
    let arch = Architecture::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for f in 0..n_fixtures {
        let s = seed + f as u64;
        let norm = if f % 2 == 0 { SemanticNorm::Feature } else { SemanticNorm::Layer };
        let cost = CostModel::new(&arch.cost_hidden, s);
        let mut sem = SemanticModel::new(&arch.semantic_hidden, norm, s + 1);
        let n = rng.gen_range(2..200);
        let mut batch = random_batch(n, 20_000 + s);
        batch.pad_to(n + rng.gen_range(0..3));
        sem.standardize_from(std::slice::from_ref(&batch));
        let want_sem = ranking(&sem.score(&batch), &batch.valid);
        let want_cost = ranking(&cost.score(&batch), &batch.valid);
        let mut m = S1Model::new(S1Variant::Linear, cost, sem, &[], s);
        out.fixtures += 1;
        m.set_linear(1.0, 0.0, 0.0);
        if ranking(&m.score(&batch), &batch.valid) != want_sem {
            out.fail(format!("fixture {f}: (1,0,0) differs from the semantic ranking"));
        }
        m.set_linear(0.0, 1.0, 0.0);
        if ranking(&m.score(&batch), &batch.valid) != want_cost {
            out.fail(format!("fixture {f}: (0,1,0) differs from the cost ranking"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSummary {
    pub outcome: CheckOutcome,
    pub n_items: usize,
    pub n_test: usize,
}

/// Partition and per-year quota checks on the corpus-shaped year histogram.
pub fn split_contract(total: usize, seeds: u64) -> SplitSummary {
    let hist = corpus_year_histogram(total);
    let mut out = CheckOutcome::default();
    let mut n_test = 0;
    for seed in 0..seeds {
        let years = years_from_histogram(&hist, seed);
        let spec = SplitSpec {
            seed,
            fold_index: seed as usize % 5,
            ..SplitSpec::default()
        };
        let split = year_stratified_split(&years, &spec);
        out.fixtures += 1;
        let mut seen = vec![0u8; years.len()];
        for &i in split.train.iter().chain(&split.val).chain(&split.test) {
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            out.fail(format!("seed {seed}: not a partition"));
        }
        let mut per_year: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
        for (i, &y) in years.iter().enumerate() {
            per_year.entry(y).or_default().0 += 1;
            if split.test.binary_search(&i).is_ok() {
                per_year.entry(y).or_default().1 += 1;
            }
        }
        for (y, (n, t)) in per_year {
            if (t as f64 - 0.2 * n as f64).abs() > 1.0 || t != test_count(n, 0.2) {
                out.fail(format!("seed {seed} year {y}: {t} of {n} held out"));
            }
        }
        n_test = split.test.len();
    }
    SplitSummary {
        outcome: out,
        n_items: total,
        n_test,
    }
}

/// Held-out results of every family on one planted corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRun {
    pub seed: u64,
    pub test_mrr: BTreeMap<Family, f64>,
    /// `(w_sem, w_cost, bias)` of the trained linear S1.
    pub linear_weights: (f64, f64, f64),
    /// MRR of the noise-free planted utility itself.
    pub oracle_mrr: f64,
}

/// Trains all five families on a planted corpus and scores the test split.
pub fn planted_run(planted: &PlantedConfig, cfg: &TrainConfig) -> PlantedRun {
    let seed = planted.seed;
    let corpus = planted_corpus(planted);
    let split = year_stratified_split(&corpus.years, &SplitSpec { seed, ..cfg.split });
    let pick = |ids: &[usize]| ids.iter().map(|&i| corpus.batches[i].clone()).collect::<Vec<_>>();
    let test: Vec<EvalItem> = split
        .test
        .iter()
        .map(|&i| EvalItem::from_batch(format!("c{i}"), corpus.years[i], corpus.batches[i].clone()))
        .collect();
    let runs = train_all(&pick(&split.train), &pick(&split.val), cfg, seed).expect("planted training");
    let mut test_mrr = BTreeMap::new();
    let mut linear_weights = (f64::NAN, f64::NAN, f64::NAN);
    for (ck, _) in runs {
        let model = ck.to_model().expect("fresh checkpoint");
        let (report, _) = evaluate(&model, &test, seed, DEFAULT_LISTING_DEPTH);
        if let Model::S1(s) = &model {
            if let Some(w) = s.linear_weights() {
                linear_weights = w;
            }
        }
        test_mrr.insert(model.family(), report.mrr);
    }
    let ranks: Vec<usize> = split
        .test
        .iter()
        .map(|&i| crate::eval::rank_gold(&corpus.utility[i], corpus.batches[i].gold_index))
        .collect();
    PlantedRun {
        seed,
        test_mrr,
        linear_weights,
        oracle_mrr: crate::eval::mrr(&ranks),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_oracle_agrees() {
        let r = metric_oracle(10, 1);
        assert!(r.passed(), "{:?}", r.failures);
    }

    #[test]
    fn gate_oracle_agrees() {
        let r = gate_oracle(10, 2);
        assert!(r.passed(), "{:?}", r.failures);
    }

    #[test]
    fn enumeration_counts() {
        let r = enumeration_oracle(6);
        assert_eq!(r.fixtures, 6);
        assert!(r.passed(), "{:?}", r.failures);
    }

    #[test]
    fn reductions_hold() {
        let r = reduction_identities(10, 3);
        assert!(r.passed(), "{:?}", r.failures);
    }

    #[test]
    fn empty_outcome_does_not_pass() {
        assert!(!CheckOutcome::default().passed());
    }
}
