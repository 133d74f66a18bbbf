//! Candidate construction: seed collection, the semantic gate, ordered
//! enumeration of morpheme sequences, and evaluation sampling.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{self, EmbeddingError, EmbeddingProvider, EmbeddingTable, NeighborIndex};
use crate::lexicon::{ConceptItem, MorphemeId, TimeIndexedLexicon};

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("seed file line {line}: {reason}")]
    SeedFile { line: usize, reason: String },
    #[error("pool file: {0}")]
    PoolFile(String),
    #[error("no seed morphemes for `{0}`")]
    EmptySeeds(String),
    #[error("no embedding for gloss of `{0}`")]
    MissingGloss(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T> = std::result::Result<T, CandidateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeedSource {
    Synset,
    Relational,
    Distributional,
}

impl SeedSource {
    fn bit(self) -> u8 {
        match self {
            SeedSource::Synset => 1,
            SeedSource::Relational => 2,
            SeedSource::Distributional => 4,
        }
    }
}

/// Bit set over [`SeedSource`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTags(u8);

impl SourceTags {
    pub fn insert(&mut self, s: SeedSource) {
        self.0 |= s.bit();
    }

    pub fn contains(self, s: SeedSource) -> bool {
        self.0 & s.bit() != 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedSet {
    pub concept_word: String,
    pub morpheme_ids: BTreeSet<MorphemeId>,
    pub source_tags: BTreeMap<MorphemeId, SourceTags>,
    pub warnings: Vec<String>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.morpheme_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.morpheme_ids.is_empty()
    }

    fn add(&mut self, id: MorphemeId, source: SeedSource) {
        self.morpheme_ids.insert(id);
        self.source_tags.entry(id).or_default().insert(source);
    }
}

/// Precomputed synset/relational seeds: `word \t synset|relational \t surface`.
#[derive(Debug, Clone, Default)]
pub struct SeedFile {
    by_word: HashMap<String, Vec<(SeedSource, String)>>,
}

impl SeedFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CandidateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut by_word: HashMap<String, Vec<(SeedSource, String)>> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let [word, source, surface] = fields[..] else {
                return Err(CandidateError::SeedFile {
                    line: i + 1,
                    reason: format!("expected 3 fields, found {}", fields.len()),
                });
            };
            let source = match source {
                "synset" => SeedSource::Synset,
                "relational" => SeedSource::Relational,
                other => {
                    return Err(CandidateError::SeedFile {
                        line: i + 1,
                        reason: format!("unknown source `{other}`"),
                    })
                }
            };
            by_word
                .entry(word.to_string())
                .or_default()
                .push((source, surface.to_string()));
        }
        Ok(Self { by_word })
    }

    pub fn get(&self, word: &str) -> Option<&[(SeedSource, String)]> {
        self.by_word.get(word).map(Vec::as_slice)
    }
}

/// One historical embedding space and an index over the morpheme surfaces it covers.
#[derive(Debug, Clone)]
pub struct DistributionalSpace {
    pub year: i32,
    table: EmbeddingTable,
    index: NeighborIndex,
}

impl DistributionalSpace {
    pub fn new(year: i32, table: EmbeddingTable, lexicon: &TimeIndexedLexicon) -> Result<Self> {
        let entries = lexicon
            .morphemes()
            .iter()
            .filter_map(|m| table.get(&m.surface).map(|v| (m.id, m.surface.clone(), v.to_vec())))
            .filter(|(_, _, v)| embeddings::norm(v) > 0.0);
        let index = NeighborIndex::new(entries)?;
        Ok(Self { year, table, index })
    }

    /// Query vector for an item: the word itself if the space knows it,
    /// else the mean of the gloss tokens it knows.
    fn query(&self, item: &ConceptItem) -> Option<Vec<f64>> {
        if let Some(v) = self.table.get(&item.word) {
            return Some(v.to_vec());
        }
        let mut acc = vec![0.0; self.index.dim()];
        let mut n = 0usize;
        for tok in item.gloss.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            if let Some(v) = self.table.get(&tok.to_lowercase()) {
                acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
                n += 1;
            }
        }
        (n > 0 && embeddings::norm(&acc) > 0.0).then_some(acc)
    }
}

/// Year-tagged spaces; an item at year `t` uses the latest space dated `<= t`.
#[derive(Debug, Clone, Default)]
pub struct YearSpaces {
    spaces: BTreeMap<i32, DistributionalSpace>,
}

impl YearSpaces {
    pub fn insert(&mut self, space: DistributionalSpace) {
        self.spaces.insert(space.year, space);
    }

    pub fn for_year(&self, year: i32) -> Option<&DistributionalSpace> {
        self.spaces.range(..=year).next_back().map(|(_, s)| s)
    }

    pub fn len(&self) -> usize {
        self.spaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spaces.is_empty()
    }
}

/// Union of synset, relational and distributional seeds available at the item's year.
pub fn build_seed_set(
    item: &ConceptItem,
    lexicon: &TimeIndexedLexicon,
    seeds: &SeedFile,
    spaces: &YearSpaces,
    distributional_k: usize,
) -> Result<SeedSet> {
    let year = item.emergence_year;
    let mut set = SeedSet {
        concept_word: item.word.clone(),
        ..SeedSet::default()
    };
    match seeds.get(&item.word) {
        Some(rows) => {
            for (source, surface) in rows {
                match lexicon.lookup(surface) {
                    Some(id) if lexicon.is_available(id, year) => set.add(id, *source),
                    Some(_) => {}
                    None => set.warnings.push(format!("seed `{surface}` not in inventory")),
                }
            }
        }
        None => set
            .warnings
            .push(format!("`{}` absent from seed file; distributional seeds only", item.word)),
    }
    if let Some(space) = spaces.for_year(year) {
        if let Some(q) = space.query(item) {
            let hits = space
                .index
                .knn_filtered(&q, distributional_k, |id| lexicon.is_available(id, year))?;
            for hit in hits {
                set.add(hit.id, SeedSource::Distributional);
            }
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub morphemes: Vec<MorphemeId>,
    pub is_gold: bool,
}

impl Candidate {
    pub fn len(&self) -> usize {
        self.morphemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.morphemes.is_empty()
    }

    pub fn shares_morpheme(&self, other: &Candidate) -> bool {
        self.morphemes.iter().any(|m| other.morphemes.contains(m))
    }

    pub fn render(&self, lexicon: &TimeIndexedLexicon) -> String {
        let parts: Vec<&str> = self.morphemes.iter().map(|&m| lexicon.surface(m)).collect();
        parts.join("+")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateConfig {
    pub gate_k: usize,
    pub max_len: usize,
    pub per_concept_cap: usize,
    pub max_surface_len: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            gate_k: 200,
            max_len: 3,
            per_concept_cap: 4096,
            max_surface_len: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub word: String,
    pub year: i32,
    pub candidates: Vec<Candidate>,
    pub gold_index: usize,
    /// Gold failed the gate and was inserted anyway; such items are kept
    /// out of training.
    pub gold_gated_out: bool,
    pub gold_inserted: bool,
    /// Sequences considered before gating and caps.
    pub enumerated: u64,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn gold(&self) -> &Candidate {
        &self.candidates[self.gold_index]
    }
}

/// Keys of the `gate_k` nearest available morphemes to the gloss vector.
pub fn knn_set(
    index: &NeighborIndex,
    gloss_vector: &[f64],
    gate_k: usize,
    available: impl Fn(MorphemeId) -> bool,
) -> Result<HashSet<MorphemeId>> {
    Ok(index
        .knn_filtered(gloss_vector, gate_k, available)?
        .into_iter()
        .map(|n| n.id)
        .collect())
}

/// True iff every morpheme of the candidate lies in the kNN set.
pub fn gate(candidate: &[MorphemeId], knn: &HashSet<MorphemeId>) -> bool {
    candidate.iter().all(|m| knn.contains(m))
}

/// All ordered sequences with repetition of lengths `1..=max_len`, shortest first.
pub fn enumerate_sequences(ids: &[MorphemeId], max_len: usize) -> Vec<Vec<MorphemeId>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<MorphemeId>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(frontier.len() * ids.len());
        for prefix in &frontier {
            for &id in ids {
                let mut seq = prefix.clone();
                seq.push(id);
                next.push(seq);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// `sum_{m=1..max_len} n^m`, saturating.
pub fn sequence_count(n: usize, max_len: usize) -> u64 {
    let mut total = 0u64;
    let mut pow = 1u64;
    for _ in 0..max_len {
        pow = pow.saturating_mul(n as u64);
        total = total.saturating_add(pow);
    }
    total
}

#[derive(Debug, Clone)]
struct Ranked {
    priority: f64,
    seq: Vec<MorphemeId>,
}

impl Ranked {
    // Ascending "better": higher priority, then smaller sequence.
    fn better(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.better(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Max-heap on "worse", so the heap top is the weakest kept candidate.
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        other.better(self)
    }
}

/// Enumerates, gates, caps and orders candidates for one concept.
///
/// Order is descending mean morpheme-concept similarity, ties broken by the
/// id sequence. The gold sequence is always present exactly once.
pub fn enumerate_candidates(
    seed_set: &SeedSet,
    item: &ConceptItem,
    config: &GateConfig,
    knn: &HashSet<MorphemeId>,
    lexicon: &TimeIndexedLexicon,
    similarity: impl Fn(MorphemeId) -> f64,
) -> CandidatePool {
    let seeds: Vec<MorphemeId> = seed_set.morpheme_ids.iter().copied().collect();
    let gated: Vec<MorphemeId> = seeds.iter().copied().filter(|m| knn.contains(m)).collect();
    let char_len: HashMap<MorphemeId, usize> = seeds
        .iter()
        .chain(&item.gold)
        .map(|&m| (m, lexicon.surface(m).chars().count()))
        .collect();
    let priority = |seq: &[MorphemeId]| seq.iter().map(|&m| similarity(m)).sum::<f64>() / seq.len() as f64;

    let cap = config.per_concept_cap.max(1);
    let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(cap.min(1 << 16) + 1);
    let mut seq = Vec::with_capacity(config.max_len);
    // Depth-first walk over sequences of the gated seeds, pruned on surface length.
    fn walk(
        gated: &[MorphemeId],
        seq: &mut Vec<MorphemeId>,
        len_so_far: usize,
        config: &GateConfig,
        char_len: &HashMap<MorphemeId, usize>,
        visit: &mut dyn FnMut(&[MorphemeId]),
    ) {
        for &m in gated {
            let l = len_so_far + char_len[&m];
            if l > config.max_surface_len {
                continue;
            }
            seq.push(m);
            visit(seq);
            if seq.len() < config.max_len {
                walk(gated, seq, l, config, char_len, visit);
            }
            seq.pop();
        }
    }
    let mut visit = |s: &[MorphemeId]| {
        let r = Ranked {
            priority: priority(s),
            seq: s.to_vec(),
        };
        if heap.len() < cap {
            heap.push(r);
        } else if let Some(top) = heap.peek() {
            if r.better(top) == Ordering::Greater {
                heap.pop();
                heap.push(r);
            }
        }
    };
    walk(&gated, &mut seq, 0, config, &char_len, &mut visit);

    let mut kept: Vec<Ranked> = heap.into_vec();
    let gold_gated_out = !gate(&item.gold, knn);
    let gold_present = kept.iter().any(|r| r.seq == item.gold);
    if !gold_present {
        if kept.len() >= cap {
            // Drop the weakest to make room.
            kept.sort_by(|a, b| b.better(a));
            kept.pop();
        }
        kept.push(Ranked {
            priority: priority(&item.gold),
            seq: item.gold.clone(),
        });
    }
    kept.sort_by(|a, b| b.better(a));
    let candidates: Vec<Candidate> = kept
        .into_iter()
        .map(|r| Candidate {
            is_gold: r.seq == item.gold,
            morphemes: r.seq,
        })
        .collect();
    let gold_index = candidates.iter().position(|c| c.is_gold).expect("gold inserted");
    CandidatePool {
        word: item.word.clone(),
        year: item.emergence_year,
        candidates,
        gold_index,
        gold_gated_out,
        gold_inserted: !gold_present,
        enumerated: sequence_count(seeds.len(), config.max_len),
    }
}

/// Gold plus up to `n_max - 1` uniformly sampled non-gold candidates, in pool order.
pub fn sample_eval_candidates<R: Rng>(pool: &CandidatePool, n_max: usize, rng: &mut R) -> CandidatePool {
    let n_max = n_max.max(1);
    if pool.len() <= n_max {
        return pool.clone();
    }
    let others: Vec<usize> = (0..pool.len()).filter(|&i| i != pool.gold_index).collect();
    let mut chosen: Vec<usize> = sample(rng, others.len(), n_max - 1)
        .into_iter()
        .map(|j| others[j])
        .collect();
    chosen.push(pool.gold_index);
    chosen.sort_unstable();
    let gold_index = chosen.iter().position(|&i| i == pool.gold_index).expect("gold kept");
    CandidatePool {
        candidates: chosen.iter().map(|&i| pool.candidates[i].clone()).collect(),
        gold_index,
        ..pool.clone()
    }
}

/// Everything needed to build pools for many concepts over one lexicon.
pub struct PoolBuilder<'a> {
    pub lexicon: &'a TimeIndexedLexicon,
    pub provider: &'a dyn EmbeddingProvider,
    pub index: &'a NeighborIndex,
    pub seeds: &'a SeedFile,
    pub spaces: &'a YearSpaces,
    pub config: GateConfig,
    pub distributional_k: usize,
}

#[derive(Debug, Clone)]
pub struct PoolOutcome {
    pub pool: CandidatePool,
    pub warnings: Vec<String>,
}

impl PoolBuilder<'_> {
    pub fn build(&self, item: &ConceptItem) -> Result<PoolOutcome> {
        let year = item.emergence_year;
        let gloss = self
            .provider
            .embed(&item.gloss)
            .ok_or_else(|| CandidateError::MissingGloss(item.word.clone()))?;
        let seed_set = build_seed_set(item, self.lexicon, self.seeds, self.spaces, self.distributional_k)?;
        if seed_set.is_empty() {
            return Err(CandidateError::EmptySeeds(item.word.clone()));
        }
        let knn = knn_set(self.index, &gloss, self.config.gate_k, |id| {
            self.lexicon.is_available(id, year)
        })?;
        let unit_gloss = embeddings::normalized(&gloss)?;
        let similarity = |m: MorphemeId| {
            self.index
                .row_of(m)
                .map(|row| embeddings::dot(self.index.vector(row), &unit_gloss))
                .unwrap_or(-1.0)
        };
        let pool = enumerate_candidates(&seed_set, item, &self.config, &knn, self.lexicon, similarity);
        Ok(PoolOutcome {
            pool,
            warnings: seed_set.warnings,
        })
    }
}

/// File name for a concept's pool; non-alphanumeric bytes are hex-escaped.
pub fn pool_file_name(word: &str) -> String {
    let mut out = String::new();
    for b in word.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' {
            out.push(b as char);
        } else {
            let _ = write!(out, "_{b:02x}");
        }
    }
    out.push_str(".pool");
    out
}

pub fn write_pool(pool: &CandidatePool, lexicon: &TimeIndexedLexicon) -> String {
    let mut out = format!(
        "word={}\tyear={}\tgold_index={}\tgold_gated_out={}\tgold_inserted={}\tenumerated={}\n",
        pool.word,
        pool.year,
        pool.gold_index,
        u8::from(pool.gold_gated_out),
        u8::from(pool.gold_inserted),
        pool.enumerated
    );
    for c in &pool.candidates {
        out.push_str(&c.render(lexicon));
        out.push('\n');
    }
    out
}

pub fn read_pool(text: &str, lexicon: &TimeIndexedLexicon) -> Result<CandidatePool> {
    let bad = |m: String| CandidateError::PoolFile(m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let mut fields: HashMap<&str, &str> = HashMap::new();
    for cell in header.split('\t') {
        let (k, v) = cell.split_once('=').ok_or_else(|| bad(format!("bad header cell `{cell}`")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("header lacks `{k}`")));
    let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
    let gold_index = num("gold_index")? as usize;
    let year: i32 = get("year")?.parse().map_err(|_| bad("bad `year`".into()))?;
    let mut candidates = Vec::new();
    for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let morphemes = line
            .split('+')
            .map(|s| lexicon.lookup(s).ok_or_else(|| bad(format!("unknown morpheme `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        candidates.push(Candidate {
            morphemes,
            is_gold: i == gold_index,
        });
    }
    if gold_index >= candidates.len() {
        return Err(bad("gold_index out of range".into()));
    }
    Ok(CandidatePool {
        word: get("word")?.to_string(),
        year,
        candidates,
        gold_index,
        gold_gated_out: num("gold_gated_out")? == 1,
        gold_inserted: num("gold_inserted")? == 1,
        enumerated: num("enumerated")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{parse_inventory, Resolution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[u32]) -> Vec<MorphemeId> {
        v.iter().map(|&i| MorphemeId(i)).collect()
    }

    fn lexicon(n: usize) -> TimeIndexedLexicon {
        let text: String = (0..n).map(|i| format!("m{i}\t\t1\n")).collect();
        parse_inventory(&text).unwrap()
    }

    fn item(gold: &[u32]) -> ConceptItem {
        ConceptItem {
            word: "w".into(),
            gloss: "g".into(),
            gold: ids(gold),
            emergence_year: 1900,
            pos: None,
        }
    }

    fn seed_set(v: &[u32]) -> SeedSet {
        let mut s = SeedSet::default();
        for &i in v {
            s.add(MorphemeId(i), SeedSource::Synset);
        }
        s
    }

    fn all(n: u32) -> HashSet<MorphemeId> {
        (0..n).map(MorphemeId).collect()
    }

    #[test]
    fn gate_cases() {
        let knn: HashSet<_> = ids(&[1, 2]).into_iter().collect();
        assert!(gate(&ids(&[1, 2, 2]), &knn));
        assert!(!gate(&ids(&[1, 3]), &knn));
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_sequences(&ids(&[0, 1]), 3).len(), 14);
        assert_eq!(enumerate_sequences(&ids(&[0]), 3).len(), 3);
        assert_eq!(sequence_count(2, 3), 14);
        let lex = lexicon(4);
        let cfg = GateConfig { per_concept_cap: 10_000, ..GateConfig::default() };
        let pool = enumerate_candidates(&seed_set(&[0, 1]), &item(&[0, 1]), &cfg, &all(4), &lex, |_| 0.0);
        assert_eq!(pool.len(), 14);
        assert!(!pool.gold_inserted && !pool.gold_gated_out);
        assert_eq!(pool.enumerated, 14);
    }

    #[test]
    fn cap_truncates_by_priority_and_keeps_gold() {
        let lex = lexicon(4);
        let cfg = GateConfig { per_concept_cap: 10, ..GateConfig::default() };
        let sim = |m: MorphemeId| if m.0 == 0 { 0.9 } else { 0.1 };
        // Gold [1,1,1] has the lowest priority so the cap would drop it.
        let pool = enumerate_candidates(&seed_set(&[0, 1]), &item(&[1, 1, 1]), &cfg, &all(4), &lex, sim);
        assert_eq!(pool.len(), 10);
        assert!(pool.gold_inserted);
        assert_eq!(pool.candidates.iter().filter(|c| c.is_gold).count(), 1);
        // Brute force: sort every sequence by (priority desc, seq asc), keep 9, add gold.
        let mut all_seqs = enumerate_sequences(&ids(&[0, 1]), 3);
        let prio = |s: &Vec<MorphemeId>| s.iter().map(|&m| sim(m)).sum::<f64>() / s.len() as f64;
        all_seqs.sort_by(|a, b| prio(b).partial_cmp(&prio(a)).unwrap().then(a.cmp(b)));
        let mut want: Vec<Vec<MorphemeId>> = all_seqs.into_iter().filter(|s| *s != ids(&[1, 1, 1])).take(9).collect();
        want.push(ids(&[1, 1, 1]));
        let got: Vec<Vec<MorphemeId>> = pool.candidates.iter().map(|c| c.morphemes.clone()).collect();
        assert_eq!(got, want);
        assert_eq!(pool.gold_index, 9);
    }

    #[test]
    fn gated_gold_is_flagged() {
        let lex = lexicon(4);
        let knn: HashSet<_> = ids(&[0, 1]).into_iter().collect();
        let pool = enumerate_candidates(&seed_set(&[0, 1, 2]), &item(&[0, 2]), &GateConfig::default(), &knn, &lex, |_| 0.0);
        assert!(pool.gold_gated_out && pool.gold_inserted);
        assert_eq!(pool.len(), 15);
        for c in pool.candidates.iter().filter(|c| !c.is_gold) {
            assert!(gate(&c.morphemes, &knn));
        }
    }

    #[test]
    fn surface_length_filter() {
        let lex = parse_inventory("abcdefghij\t\t0\nxy\t\t0\n").unwrap();
        let cfg = GateConfig { max_surface_len: 12, ..GateConfig::default() };
        let pool = enumerate_candidates(&seed_set(&[0, 1]), &item(&[1]), &cfg, &all(2), &lex, |_| 0.0);
        for c in &pool.candidates {
            assert!(c.render(&lex).replace('+', "").len() <= 12);
        }
        // a, x, ax, xa, xx, xxx; any length-3 sequence containing a exceeds 12
        assert_eq!(pool.len(), 6);
    }

    #[test]
    fn sampling() {
        let lex = lexicon(30);
        let cfg = GateConfig { per_concept_cap: 100_000, max_surface_len: 100, ..GateConfig::default() };
        let seeds: Vec<u32> = (0..20).collect();
        let pool = enumerate_candidates(&seed_set(&seeds), &item(&[3, 4]), &cfg, &all(30), &lex, |m| m.0 as f64);
        assert_eq!(pool.len(), 20 + 400 + 8000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_eval_candidates(&pool, 1024, &mut rng);
        assert_eq!(s.len(), 1024);
        assert_eq!(s.gold().morphemes, ids(&[3, 4]));
        assert_eq!(s.candidates.iter().filter(|c| c.is_gold).count(), 1);
        let again = sample_eval_candidates(&pool, 1024, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(s, again);
        let small = enumerate_candidates(&seed_set(&[0, 1]), &item(&[0]), &cfg, &all(30), &lex, |_| 0.0);
        assert_eq!(sample_eval_candidates(&small, 1024, &mut rng).len(), 14);
    }

    #[test]
    fn seed_sets_respect_availability() {
        let lex = parse_inventory("apple\t\t0\npie\t\t0\ny\t\t1\n").unwrap();
        let (lex, _) = lex
            .attach_frequencies_str("apple\t1800\t1\t1\t0\npie\t1950\t1\t1\t0\n", Resolution::Decade, "f")
            .unwrap();
        let seeds = SeedFile::parse("w\tsynset\tapple\nw\trelational\tpie\nw\tsynset\ty\nw\tsynset\tnope\n").unwrap();
        let set = build_seed_set(&item(&[0]), &lex, &seeds, &YearSpaces::default(), 10).unwrap();
        assert_eq!(set.morpheme_ids.iter().copied().collect::<Vec<_>>(), ids(&[0, 2]));
        assert_eq!(set.warnings.len(), 1);
        let mut other = item(&[0]);
        other.word = "unknown".into();
        let set = build_seed_set(&other, &lex, &seeds, &YearSpaces::default(), 10).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.warnings.len(), 1);
    }

    #[test]
    fn distributional_seeds_from_latest_space() {
        let lex = parse_inventory("apple\t\t0\npie\t\t0\ntart\t\t1\n").unwrap();
        let (lex, _) = lex
            .attach_frequencies_str("apple\t1800\t1\t1\t0\npie\t1800\t1\t1\t0\n", Resolution::Decade, "f")
            .unwrap();
        let old = EmbeddingTable::parse("w\t1 0\napple\t1 0\npie\t0 1\ntart\t1 0.1\n").unwrap();
        let new = EmbeddingTable::parse("w\t0 1\napple\t1 0\npie\t0 1\ntart\t0 1\n").unwrap();
        let mut spaces = YearSpaces::default();
        spaces.insert(DistributionalSpace::new(1850, old, &lex).unwrap());
        spaces.insert(DistributionalSpace::new(1950, new, &lex).unwrap());
        let set = build_seed_set(&item(&[0]), &lex, &SeedFile::default(), &spaces, 2).unwrap();
        assert_eq!(set.morpheme_ids.iter().copied().collect::<Vec<_>>(), ids(&[0, 2]));
        assert!(set.source_tags[&MorphemeId(0)].contains(SeedSource::Distributional));
        assert!(spaces.for_year(1849).is_none());
    }

    #[test]
    fn pool_file_round_trip() {
        let lex = lexicon(4);
        let pool = enumerate_candidates(&seed_set(&[0, 1]), &item(&[2]), &GateConfig::default(), &all(2), &lex, |_| 0.0);
        let text = write_pool(&pool, &lex);
        assert!(text.starts_with("word=w\tyear=1900\t"));
        assert_eq!(read_pool(&text, &lex).unwrap(), pool);
        assert_eq!(pool_file_name("fiancée"), "fianc_c3_a9e.pool");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn uncapped_enumeration_count(n in 1usize..=6, max_len in 1usize..=3) {
                let lex = lexicon(6);
                let seeds: Vec<u32> = (0..n as u32).collect();
                let cfg = GateConfig { max_len, per_concept_cap: usize::MAX, max_surface_len: 1000, ..GateConfig::default() };
                let pool = enumerate_candidates(&seed_set(&seeds), &item(&[0]), &cfg, &all(6), &lex, |_| 0.0);
                let want: usize = (1..=max_len).map(|m| n.pow(m as u32)).sum();
                prop_assert_eq!(pool.len(), want);
                prop_assert_eq!(enumerate_sequences(&ids(&seeds), max_len).len(), want);
            }
        }
    }
}
