//! The six commands over one content-addressed run directory.
//!
//! Layout under `<output_dir>/<digest>/`:
//! `lexicon.bundle`, `dataset.json`, `ingest_report.tsv` (ingest);
//! `pools/` (pools, unless `--pool-cache` points elsewhere);
//! `checkpoints/`, `reports/` (train); `eval/` (eval);
//! `temporal/` (temporal); `report/` (report); `manifest.json`.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use morphorank_core::candidates::{
    pool_file_name, read_pool, sample_eval_candidates, write_pool, CandidatePool, DistributionalSpace, PoolBuilder,
    SeedFile, YearSpaces,
};
use morphorank_core::embeddings::{EmbeddingProvider, EmbeddingTable, NeighborIndex, PseudoProvider};
use morphorank_core::eval::{dump_scores, evaluate, report_tables, temporal_table, EvalItem, FamilyResult, MetricsReport, RankingRecord, TemporalRow};
use morphorank_core::features::{assemble_batch, FeatureBatch, PhonologyMedians};
use morphorank_core::lexicon::{load_dataset, load_inventory, ConceptItem, Dataset, SkippedRow, TimeIndexedLexicon};
use morphorank_core::models::{Family, Model, ModelCheckpoint};
use morphorank_core::parallel::par_map;
use morphorank_core::rng;
use morphorank_core::training::{
    temporal_window_runs, train_all, train_family, window_end_years, year_stratified_split, Bases, Split, SplitSpec,
    TrainError, TrainRunReport, WindowData,
};
use sha2::{Digest, Sha256};

use crate::config::{EmbeddingSpec, RunConfig};
use crate::error::{user, UserError};
use crate::manifest::{file_digest, now_unix, CommandRecord, RunManifest};

const BUNDLE: &str = "lexicon.bundle";
const DATASET: &str = "dataset.json";
const POOL_SUMMARY: &str = "summary.tsv";

/// Digest over the effective config, the seed and the input contents.
pub fn run_digest(cfg: &RunConfig, seed: u64) -> Result<String> {
    let mut h = Sha256::new();
    for (k, v) in cfg.snapshot() {
        if k != "repeats" {
            h.update(format!("{k}={v}\n"));
        }
    }
    h.update(format!("seed={seed}\n"));
    for (role, path) in cfg.inputs() {
        let d = if path.is_file() { file_digest(&path)? } else { "missing".into() };
        h.update(format!("{role}:{d}\n"));
    }
    Ok(hex::encode(h.finalize()))
}

pub struct Run {
    pub cfg: RunConfig,
    pub seed: u64,
    pub dir: PathBuf,
    pub pool_dir: PathBuf,
    manifest: RunManifest,
    started: u64,
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn require_file(role: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
    let p = path.clone().ok_or_else(|| UserError(format!("config does not set `{role}`")))?;
    if !p.is_file() {
        return Err(UserError(format!("{role} file not found: {}", p.display())).into());
    }
    Ok(p)
}

fn skipped_table(rows: &[(&str, &SkippedRow)]) -> String {
    let mut out = String::from("kind\tsource\tline\treason\n");
    for (kind, r) in rows {
        let _ = writeln!(out, "{kind}\t{}\t{}\t{}", r.source, r.line, r.reason);
    }
    out
}

/// Everything `train`, `eval` and `temporal` need, rebuilt from the pool cache.
struct Corpus {
    lexicon: TimeIndexedLexicon,
    provider: Box<dyn EmbeddingProvider>,
    index: NeighborIndex,
    medians: PhonologyMedians,
    items: Vec<ConceptItem>,
    pools: Vec<CandidatePool>,
    batches: Vec<FeatureBatch>,
    years: Vec<i32>,
    trainable: Vec<bool>,
    split: Split,
}

impl Corpus {
    fn ids(&self, ids: &[usize], need_gate: bool) -> Vec<FeatureBatch> {
        ids.iter()
            .filter(|&&i| !need_gate || self.trainable[i])
            .map(|&i| self.batches[i].clone())
            .collect()
    }

    fn gloss_vector(&self, i: usize) -> Result<Vec<f64>> {
        self.provider
            .embed(&self.items[i].gloss)
            .ok_or_else(|| anyhow!("no embedding for gloss of `{}`", self.items[i].word))
    }

    /// The fixed per-(concept, seed) evaluation sample of item `i`.
    fn eval_item(&self, i: usize, seed: u64, n_max: usize) -> Result<EvalItem> {
        let pool = &self.pools[i];
        let mut r = rng::derive(seed, &[b"eval.sample", pool.word.as_bytes()]);
        let sampled = sample_eval_candidates(pool, n_max, &mut r);
        let batch = assemble_batch(&sampled, &self.lexicon, &self.index, self.provider.as_ref(), &self.gloss_vector(i)?, &self.medians)?;
        let mut item = EvalItem::from_batch(pool.word.clone(), pool.year, batch);
        item.labels = sampled.candidates.iter().map(|c| c.render(&self.lexicon)).collect();
        item.gold_gated_out = pool.gold_gated_out;
        Ok(item)
    }

    fn eval_items(&self, ids: &[usize], seed: u64, n_max: usize) -> Result<Vec<EvalItem>> {
        par_map(ids, |&i| self.eval_item(i, seed, n_max)).into_iter().collect()
    }
}

impl Run {
    pub fn open(cfg: RunConfig, seed: u64, pool_cache: Option<PathBuf>) -> Result<Self> {
        let digest = run_digest(&cfg, seed)?;
        let dir = cfg.output_dir.join(&digest[..16]);
        fs::create_dir_all(&dir).with_context(|| format!("creating run directory {}", dir.display()))?;
        let mut manifest = RunManifest::load_or_new(&dir)?;
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.seed = seed;
        manifest.config = cfg.snapshot();
        manifest.inputs.clear();
        for (role, path) in cfg.inputs() {
            if path.is_file() {
                manifest.inputs.insert(role, (path.display().to_string(), file_digest(&path)?));
            }
        }
        let pool_dir = pool_cache.unwrap_or_else(|| dir.join("pools"));
        Ok(Self {
            cfg,
            seed,
            dir,
            pool_dir,
            manifest,
            started: now_unix(),
        })
    }

    /// Lists every artifact with its digest and logs the command.
    pub fn finish(mut self, command: &str) -> Result<PathBuf> {
        self.manifest.record_artifacts(&self.dir)?;
        self.manifest.commands.push(CommandRecord {
            command: command.to_string(),
            started_unix: self.started,
            finished_unix: now_unix(),
        });
        self.manifest.save(&self.dir)?;
        Ok(self.dir)
    }

    fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.cfg.repeats as u64).map(move |r| self.seed + r)
    }

    pub fn ingest(&self) -> Result<String> {
        let inv = require_file("inventory", &self.cfg.inventory)?;
        let ds_path = require_file("dataset", &self.cfg.dataset)?;
        for f in &self.cfg.frequencies {
            require_file(&format!("frequency.{}", f.name), &Some(f.path.clone()))?;
        }
        let mut lexicon = load_inventory(&inv).map_err(user)?;
        let mut skipped: Vec<(&str, SkippedRow)> = Vec::new();
        for f in &self.cfg.frequencies {
            let (lex, rows) = lexicon.attach_frequencies(&f.path, f.resolution).map_err(user)?;
            lexicon = lex;
            skipped.extend(rows.into_iter().map(|r| ("frequency", r)));
        }
        if self.cfg.pronunciations.is_some() {
            let p = require_file("pronunciations", &self.cfg.pronunciations)?;
            let (lex, rows) = lexicon.attach_pronunciations(&p).map_err(user)?;
            lexicon = lex;
            skipped.extend(rows.into_iter().map(|r| ("pronunciation", r)));
        }
        let dataset: Dataset = load_dataset(&ds_path, &lexicon).map_err(user)?;
        skipped.extend(dataset.rejected.iter().cloned().map(|r| ("dataset", r)));
        write_file(&self.dir.join(BUNDLE), lexicon.to_bundle())?;
        write_json(&self.dir.join(DATASET), &dataset)?;
        let rows: Vec<(&str, &SkippedRow)> = skipped.iter().map(|(k, r)| (*k, r)).collect();
        write_file(&self.dir.join("ingest_report.tsv"), skipped_table(&rows))?;
        Ok(format!(
            "ingested {} morphemes and {} dataset items; {} rows skipped",
            lexicon.len(),
            dataset.len(),
            skipped.len()
        ))
    }

    fn lexicon(&self) -> Result<TimeIndexedLexicon> {
        let p = self.dir.join(BUNDLE);
        let bytes = fs::read(&p).map_err(|_| UserError(format!("no lexicon bundle in {}; run `ingest` first", self.dir.display())))?;
        TimeIndexedLexicon::from_bundle(&bytes).with_context(|| format!("decoding {}", p.display()))
    }

    fn dataset(&self) -> Result<Dataset> {
        let p = self.dir.join(DATASET);
        if !p.is_file() {
            return Err(UserError(format!("no dataset in {}; run `ingest` first", self.dir.display())).into());
        }
        read_json(&p)
    }

    fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        match &self.cfg.embeddings {
            None => Err(UserError("config does not set `embeddings`".into()).into()),
            Some(EmbeddingSpec::Pseudo { dim, seed }) => Ok(Box::new(PseudoProvider { dim: *dim, seed: *seed })),
            Some(EmbeddingSpec::Table(p)) => {
                if !p.is_file() {
                    return Err(UserError(format!("embeddings file not found: {}", p.display())).into());
                }
                Ok(Box::new(EmbeddingTable::load(p).map_err(user)?))
            }
        }
    }

    pub fn pools(&self) -> Result<String> {
        let lexicon = self.lexicon()?;
        let dataset = self.dataset()?;
        let provider = self.provider()?;
        let seeds_path = require_file("seeds", &self.cfg.seeds)?;
        let seeds = SeedFile::load(&seeds_path).map_err(user)?;
        let index = NeighborIndex::from_lexicon(&lexicon, provider.as_ref()).map_err(user)?;
        let mut spaces = YearSpaces::default();
        for (&year, path) in &self.cfg.year_tables {
            require_file(&format!("year_table.{year}"), &Some(path.clone()))?;
            let table = EmbeddingTable::load(path).map_err(user)?;
            spaces.insert(DistributionalSpace::new(year, table, &lexicon).map_err(user)?);
        }
        let builder = PoolBuilder {
            lexicon: &lexicon,
            provider: provider.as_ref(),
            index: &index,
            seeds: &seeds,
            spaces: &spaces,
            config: self.cfg.gate,
            distributional_k: self.cfg.distributional_k,
        };
        let outcomes = par_map(&dataset.items, |item| builder.build(item));

        fs::create_dir_all(&self.pool_dir).with_context(|| format!("creating {}", self.pool_dir.display()))?;
        for entry in fs::read_dir(&self.pool_dir)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "pool") {
                fs::remove_file(&p)?;
            }
        }
        let mut summary = String::from("word\tyear\tstatus\tpool_size\tgold_gated_out\tgold_inserted\tenumerated\twarnings\n");
        let (mut built, mut gated, mut failed) = (0, 0, 0);
        for (item, outcome) in dataset.items.iter().zip(outcomes) {
            match outcome {
                Ok(o) => {
                    let p = &o.pool;
                    write_file(&self.pool_dir.join(pool_file_name(&p.word)), write_pool(p, &lexicon))?;
                    built += 1;
                    gated += usize::from(p.gold_gated_out);
                    let _ = writeln!(
                        summary,
                        "{}\t{}\tok\t{}\t{}\t{}\t{}\t{}",
                        p.word,
                        p.year,
                        p.len(),
                        u8::from(p.gold_gated_out),
                        u8::from(p.gold_inserted),
                        p.enumerated,
                        o.warnings.len()
                    );
                }
                Err(e) => {
                    failed += 1;
                    let _ = writeln!(summary, "{}\t{}\tskipped: {e}\t0\t0\t0\t0\t0", item.word, item.emergence_year);
                }
            }
        }
        write_file(&self.pool_dir.join(POOL_SUMMARY), summary)?;
        Ok(format!("built {built} pools ({failed} skipped); {gated} golds gated out (gate_k = {})", self.cfg.gate.gate_k))
    }

    fn corpus(&self) -> Result<Corpus> {
        let lexicon = self.lexicon()?;
        let dataset = self.dataset()?;
        let provider = self.provider()?;
        let summary_path = self.pool_dir.join(POOL_SUMMARY);
        let summary = fs::read_to_string(&summary_path)
            .map_err(|_| UserError(format!("no pool cache at {}; run `pools` first", self.pool_dir.display())))?;
        let by_word: HashMap<&str, &ConceptItem> = dataset.items.iter().map(|i| (i.word.as_str(), i)).collect();
        let mut items = Vec::new();
        let mut pools = Vec::new();
        for line in summary.lines().skip(1) {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.get(2) != Some(&"ok") {
                continue;
            }
            let item = *by_word
                .get(cols[0])
                .ok_or_else(|| UserError(format!("pool cache names `{}`, which is not in the dataset; rerun `pools`", cols[0])))?;
            let p = self.pool_dir.join(pool_file_name(&item.word));
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            pools.push(read_pool(&text, &lexicon).map_err(user)?);
            items.push(item.clone());
        }
        let index = NeighborIndex::from_lexicon(&lexicon, provider.as_ref()).map_err(user)?;
        let medians = PhonologyMedians::from_lexicon(&lexicon);
        let years: Vec<i32> = pools.iter().map(|p| p.year).collect();
        let trainable: Vec<bool> = pools.iter().map(|p| !p.gold_gated_out).collect();
        let split = year_stratified_split(
            &years,
            &SplitSpec {
                seed: self.seed,
                ..self.cfg.train.split
            },
        );
        let mut corpus = Corpus {
            lexicon,
            provider,
            index,
            medians,
            items,
            pools,
            batches: Vec::new(),
            years,
            trainable,
            split,
        };
        let ids: Vec<usize> = (0..corpus.pools.len()).collect();
        let c = &corpus;
        let batches: Result<Vec<FeatureBatch>> = par_map(&ids, |&i| {
            Ok(assemble_batch(&c.pools[i], &c.lexicon, &c.index, c.provider.as_ref(), &c.gloss_vector(i)?, &c.medians)?)
        })
        .into_iter()
        .collect();
        corpus.batches = batches?;
        Ok(corpus)
    }

    fn save_run(&self, ck: &ModelCheckpoint, report: &TrainRunReport) -> Result<()> {
        let stem = format!("{}-seed{}", ck.family, report.seed);
        let ck_path = self.dir.join("checkpoints").join(format!("{stem}.ckpt"));
        fs::create_dir_all(ck_path.parent().expect("has parent"))?;
        ck.save(&ck_path)?;
        write_json(&self.dir.join("reports").join(format!("{stem}.json")), report)
    }

    fn load_checkpoint(&self, family: Family, seed: u64) -> Option<ModelCheckpoint> {
        let p = self.dir.join("checkpoints").join(format!("{family}-seed{seed}.ckpt"));
        ModelCheckpoint::load(&p).ok()
    }

    /// Trains `family` (all five when `None`) for every repeat seed.
    pub fn train(&self, family: Option<Family>) -> Result<String> {
        let corpus = self.corpus()?;
        let train = corpus.ids(&corpus.split.train, true);
        let val = corpus.ids(&corpus.split.val, true);
        if train.is_empty() {
            return Err(UserError("no trainable items after the split".into()).into());
        }
        let mut lines = Vec::new();
        for seed in self.seeds() {
            let runs = match family {
                None => train_all(&train, &val, &self.cfg.train, seed)?,
                Some(f) if f.is_s1() => {
                    let cost = self.load_checkpoint(Family::Cost, seed).map(|c| c.to_model()).transpose()?;
                    let sem = self.load_checkpoint(Family::Semantic, seed).map(|c| c.to_model()).transpose()?;
                    let bases = Bases {
                        cost: match &cost {
                            Some(Model::Cost(m)) => Some(m),
                            _ => None,
                        },
                        semantic: match &sem {
                            Some(Model::Semantic(m)) => Some(m),
                            _ => None,
                        },
                    };
                    match train_family(f, &train, &val, bases, &self.cfg.train, seed) {
                        Err(e @ TrainError::MissingBases { .. }) => {
                            return Err(UserError(format!("{e}; train them first for seed {seed} (or use `--family all`)")).into())
                        }
                        r => vec![r?],
                    }
                }
                Some(f) => vec![train_family(f, &train, &val, Bases::none(), &self.cfg.train, seed)?],
            };
            for (ck, report) in runs {
                self.save_run(&ck, &report)?;
                lines.push(format!(
                    "{} seed {seed}: best epoch {} of {}, val MRR {:.4} ({:?})",
                    report.family,
                    report.best_epoch,
                    report.epochs.len(),
                    report.best_val_mrr,
                    report.stop_reason
                ));
            }
        }
        Ok(lines.join("\n"))
    }

    fn checkpoints(&self) -> Result<Vec<PathBuf>> {
        let dir = self.dir.join("checkpoints");
        let mut out: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "ckpt"))
                .collect(),
            Err(_) => Vec::new(),
        };
        out.sort();
        if out.is_empty() {
            return Err(UserError(format!("no checkpoints in {}; run `train` first", dir.display())).into());
        }
        Ok(out)
    }

    pub fn eval(&self, dump: bool) -> Result<String> {
        let paths = self.checkpoints()?;
        let corpus = self.corpus()?;
        let mut by_seed: BTreeMap<u64, Vec<EvalItem>> = BTreeMap::new();
        let mut lines = Vec::new();
        for p in paths {
            let ck = ModelCheckpoint::load(&p)?;
            let model = ck.to_model()?;
            let seed = ck.meta.seed;
            if let Entry::Vacant(slot) = by_seed.entry(seed) {
                slot.insert(corpus.eval_items(&corpus.split.test, seed, self.cfg.eval_candidates)?);
            }
            let (report, records) = evaluate(&model, &by_seed[&seed], seed, self.cfg.listing_depth);
            let stem = p.file_stem().expect("checkpoint file name").to_string_lossy().to_string();
            let out = self.dir.join("eval");
            write_json(&out.join(format!("{stem}.metrics.json")), &report)?;
            write_json(&out.join(format!("{stem}.records.json")), &records)?;
            if dump {
                write_file(&out.join(format!("{stem}.scores.tsv")), dump_scores(&records))?;
            }
            lines.push(format!(
                "{} seed {seed}: MRR {:.4}, Acc@10 {:.4} over {} items ({} gated out)",
                report.family,
                report.mrr,
                report.acc_at(10).unwrap_or(0.0),
                report.n_items,
                report.n_gated_out
            ));
        }
        Ok(lines.join("\n"))
    }

    pub fn temporal(&self) -> Result<String> {
        let corpus = self.corpus()?;
        let end_years = window_end_years(self.cfg.temporal_first, self.cfg.temporal_last, self.cfg.temporal_step);
        let mut rows: Vec<TemporalRow> = Vec::new();
        for seed in self.seeds() {
            let tests = corpus.eval_items(&corpus.split.test, seed, self.cfg.eval_candidates)?;
            // Windows only read test positions; other slots hold the full pool.
            let mut eval_items: Vec<EvalItem> = corpus
                .batches
                .iter()
                .zip(&corpus.pools)
                .map(|(b, p)| EvalItem::from_batch(p.word.clone(), p.year, b.clone()))
                .collect();
            for (&i, item) in corpus.split.test.iter().zip(tests) {
                eval_items[i] = item;
            }
            let data = WindowData {
                years: &corpus.years,
                train_batches: &corpus.batches,
                eval_items: &eval_items,
                split: &corpus.split,
                trainable: &corpus.trainable,
            };
            for w in temporal_window_runs(data, &end_years, &self.cfg.train, seed)? {
                rows.extend(w.rows(seed));
            }
        }
        let dir = self.dir.join("temporal");
        write_json(&dir.join("rows.json"), &rows)?;
        write_file(&dir.join("temporal.tsv"), temporal_table(&rows))?;
        let done = rows.iter().filter(|r| !r.skipped).count();
        Ok(format!("{} windows x {} seeds: {done} of {} rows trained", end_years.len(), self.cfg.repeats, rows.len()))
    }

    pub fn report(&self) -> Result<String> {
        let dir = self.dir.join("eval");
        let mut metric_files: Vec<PathBuf> = fs::read_dir(&dir)
            .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        metric_files.retain(|p| p.to_string_lossy().ends_with(".metrics.json"));
        metric_files.sort();
        if metric_files.is_empty() {
            return Err(UserError(format!("no evaluation results in {}; run `eval` first", dir.display())).into());
        }
        let mut results = Vec::new();
        for m in metric_files {
            let report: MetricsReport = read_json(&m)?;
            let rec_path = PathBuf::from(m.to_string_lossy().replace(".metrics.json", ".records.json"));
            let records: Vec<RankingRecord> = read_json(&rec_path)?;
            results.push(FamilyResult { report, records });
        }
        results.sort_by_key(|r| (r.report.family, r.report.seed));
        let temporal_path = self.dir.join("temporal").join("rows.json");
        let temporal: Vec<TemporalRow> = if temporal_path.is_file() { read_json(&temporal_path)? } else { Vec::new() };
        let out = self.dir.join("report");
        report_tables(&results, &temporal, &out)?;
        let summary = fs::read_to_string(out.join("summary.tsv"))?;
        Ok(summary.trim_end().to_string())
    }
}
