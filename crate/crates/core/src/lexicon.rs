//! Time-indexed morpheme lexicon.
//!
//! The lexicon holds the morpheme inventory together with diachronic
//! frequency tables and phonological counts, and answers the by-year
//! queries used during candidate construction and feature extraction.
//! It is built once through the `load_*`/`attach_*` functions and is
//! read-only afterwards.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Earliest emergence year accepted in a dataset.
pub const MIN_EMERGENCE_YEAR: i32 = 1820;
/// Latest emergence year accepted in a dataset.
pub const MAX_EMERGENCE_YEAR: i32 = 2019;
/// Maximum number of morphemes in a gold sequence.
pub const MAX_GOLD_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: duplicate surface `{surface}`")]
    DuplicateSurface { line: usize, surface: String },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: negative count {value}")]
    NegativeCount { line: usize, value: i64 },
    #[error("line {line}: year {year} is not a multiple of 10 in a decade-resolution table")]
    OffDecade { line: usize, year: i32 },
    #[error("unknown morpheme id {0}")]
    UnknownMorpheme(u32),
    #[error("window must be positive")]
    EmptyWindow,
}

pub type Result<T> = std::result::Result<T, LexiconError>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Dense handle into the morpheme inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MorphemeId(pub u32);

impl MorphemeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for MorphemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Morpheme {
    pub id: MorphemeId,
    pub surface: String,
    pub definition: Option<String>,
    /// Affix-inventory entries without corpus series are always available.
    pub is_affix: bool,
    pub phoneme_count: Option<u32>,
    pub syllable_count: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Decade,
    Year,
}

impl std::str::FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "decade" => Ok(Resolution::Decade),
            "year" => Ok(Resolution::Year),
            other => Err(format!("unknown resolution `{other}` (expected decade|year)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub year: i32,
    pub type_delta: u64,
    pub token_delta: u64,
    pub standalone_delta: u64,
}

/// One corpus' frequency deltas for one morpheme, years strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySeries {
    pub morpheme: MorphemeId,
    pub resolution: Resolution,
    pub points: Vec<FrequencyPoint>,
}

impl FrequencySeries {
    /// Points with `year <= upto`, as a prefix slice.
    fn prefix(&self, upto: i32) -> &[FrequencyPoint] {
        let end = self.points.partition_point(|p| p.year <= upto);
        &self.points[..end]
    }
}

/// Cumulative counts at a given year.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub types: u64,
    pub tokens: u64,
    pub standalone: u64,
}

/// Trailing-window counts at a given year.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowCounts {
    pub tokens: u64,
    pub standalone: u64,
}

/// A row dropped during ingestion, kept for the validation report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub source: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeIndexedLexicon {
    morphemes: Vec<Morpheme>,
    #[serde(skip)]
    by_surface: HashMap<String, MorphemeId>,
    /// Per morpheme, one series per attached corpus.
    series: Vec<Vec<FrequencySeries>>,
    year_range: Option<(i32, i32)>,
}

impl TimeIndexedLexicon {
    fn from_morphemes(morphemes: Vec<Morpheme>) -> Self {
        let by_surface = morphemes
            .iter()
            .map(|m| (m.surface.clone(), m.id))
            .collect();
        let series = vec![Vec::new(); morphemes.len()];
        Self {
            morphemes,
            by_surface,
            series,
            year_range: None,
        }
    }

    /// Builds an inventory-only lexicon from `(surface, definition, is_affix)`.
    pub fn from_entries<I, S>(entries: I) -> std::result::Result<Self, String>
    where
        I: IntoIterator<Item = (S, Option<String>, bool)>,
        S: Into<String>,
    {
        let mut morphemes = Vec::new();
        let mut seen = HashSet::new();
        for (i, (surface, definition, is_affix)) in entries.into_iter().enumerate() {
            let surface = surface.into();
            validate_surface(&surface)?;
            if !seen.insert(surface.clone()) {
                return Err(format!("duplicate surface `{surface}`"));
            }
            morphemes.push(Morpheme {
                id: MorphemeId(i as u32),
                surface,
                definition,
                is_affix,
                phoneme_count: None,
                syllable_count: None,
            });
        }
        Ok(Self::from_morphemes(morphemes))
    }

    /// Restores the surface index after deserialization.
    pub fn reindex(&mut self) {
        self.by_surface = self
            .morphemes
            .iter()
            .map(|m| (m.surface.clone(), m.id))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.morphemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.morphemes.is_empty()
    }

    pub fn morphemes(&self) -> &[Morpheme] {
        &self.morphemes
    }

    pub fn morpheme(&self, id: MorphemeId) -> Result<&Morpheme> {
        self.morphemes
            .get(id.index())
            .ok_or(LexiconError::UnknownMorpheme(id.0))
    }

    pub fn surface(&self, id: MorphemeId) -> &str {
        &self.morphemes[id.index()].surface
    }

    pub fn lookup(&self, surface: &str) -> Option<MorphemeId> {
        self.by_surface.get(surface).copied()
    }

    pub fn series(&self, id: MorphemeId) -> &[FrequencySeries] {
        &self.series[id.index()]
    }

    pub fn year_range(&self) -> Option<(i32, i32)> {
        self.year_range
    }

    /// Attaches one corpus' frequency table; rows naming unknown surfaces are
    /// returned in the skip report.
    pub fn attach_frequencies(
        self,
        path: &Path,
        resolution: Resolution,
    ) -> Result<(Self, Vec<SkippedRow>)> {
        let text = read_text(path)?;
        self.attach_frequencies_str(&text, resolution, &path.display().to_string())
    }

    pub fn attach_frequencies_str(
        mut self,
        text: &str,
        resolution: Resolution,
        source: &str,
    ) -> Result<(Self, Vec<SkippedRow>)> {
        let mut skipped = Vec::new();
        // BTreeMap keyed by year merges nothing: duplicates are rejected below.
        let mut rows: BTreeMap<MorphemeId, BTreeMap<i32, FrequencyPoint>> = BTreeMap::new();
        for (lineno, line) in numbered_lines(text) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(LexiconError::Malformed {
                    line: lineno,
                    reason: format!("expected 5 tab-separated fields, found {}", fields.len()),
                });
            }
            let year: i32 = parse_field(fields[1], lineno, "year")?;
            let mut counts = [0u64; 3];
            for (slot, raw) in counts.iter_mut().zip(&fields[2..]) {
                let value: i64 = parse_field(raw, lineno, "count")?;
                if value < 0 {
                    return Err(LexiconError::NegativeCount {
                        line: lineno,
                        value,
                    });
                }
                *slot = value as u64;
            }
            if resolution == Resolution::Decade && year.rem_euclid(10) != 0 {
                return Err(LexiconError::OffDecade { line: lineno, year });
            }
            let surface = fields[0].trim();
            let Some(id) = self.lookup(surface) else {
                skipped.push(SkippedRow {
                    source: source.to_string(),
                    line: lineno,
                    reason: format!("unknown surface `{surface}`"),
                });
                continue;
            };
            let point = FrequencyPoint {
                year,
                type_delta: counts[0],
                token_delta: counts[1],
                standalone_delta: counts[2],
            };
            if rows.entry(id).or_default().insert(year, point).is_some() {
                return Err(LexiconError::Malformed {
                    line: lineno,
                    reason: format!("repeated year {year} for `{surface}`"),
                });
            }
        }
        for (id, points) in rows {
            let points: Vec<FrequencyPoint> = points.into_values().collect();
            if let (Some(first), Some(last)) = (points.first(), points.last()) {
                self.year_range = Some(match self.year_range {
                    None => (first.year, last.year),
                    Some((lo, hi)) => (lo.min(first.year), hi.max(last.year)),
                });
            }
            self.series[id.index()].push(FrequencySeries {
                morpheme: id,
                resolution,
                points,
            });
        }
        Ok((self, skipped))
    }

    /// Fills phoneme/syllable counts from a CMU-format pronouncing dictionary.
    pub fn attach_pronunciations(self, path: &Path) -> Result<(Self, Vec<SkippedRow>)> {
        let text = read_text(path)?;
        Ok(self.attach_pronunciations_str(&text, &path.display().to_string()))
    }

    pub fn attach_pronunciations_str(mut self, text: &str, source: &str) -> (Self, Vec<SkippedRow>) {
        let (entries, skipped) = parse_cmu(text, source);
        for m in &mut self.morphemes {
            if let Some(p) = entries.get(&m.surface) {
                m.phoneme_count = Some(p.phonemes);
                m.syllable_count = Some(p.syllables);
            }
        }
        (self, skipped)
    }

    /// Sums of all deltas dated at or before `year`, across every attached corpus.
    pub fn cumulative_counts(&self, id: MorphemeId, year: i32) -> Result<Counts> {
        self.morpheme(id)?;
        let mut out = Counts::default();
        for s in &self.series[id.index()] {
            for p in s.prefix(year) {
                out.types += p.type_delta;
                out.tokens += p.token_delta;
                out.standalone += p.standalone_delta;
            }
        }
        Ok(out)
    }

    /// Sums over the trailing half-open interval `(year - window, year]`.
    pub fn windowed_count(&self, id: MorphemeId, year: i32, window: i32) -> Result<WindowCounts> {
        if window <= 0 {
            return Err(LexiconError::EmptyWindow);
        }
        self.morpheme(id)?;
        let lo = year - window;
        let mut out = WindowCounts::default();
        for s in &self.series[id.index()] {
            for p in s.prefix(year).iter().filter(|p| p.year > lo) {
                out.tokens += p.token_delta;
                out.standalone += p.standalone_delta;
            }
        }
        Ok(out)
    }

    pub fn is_available(&self, id: MorphemeId, year: i32) -> bool {
        let series = &self.series[id.index()];
        if series.is_empty() {
            return self.morphemes[id.index()].is_affix;
        }
        series
            .iter()
            .any(|s| s.prefix(year).iter().any(|p| p.token_delta > 0))
    }

    /// Ids attested (cumulative token count > 0) by `year`, plus series-less affixes.
    pub fn available_morphemes(&self, year: i32) -> HashSet<MorphemeId> {
        self.morphemes
            .iter()
            .map(|m| m.id)
            .filter(|&id| self.is_available(id, year))
            .collect()
    }

    /// Canonical serialized form used for bundle files and digests.
    pub fn to_bundle(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("lexicon serializes")
    }

    pub fn from_bundle(bytes: &[u8]) -> std::result::Result<Self, serde_json::Error> {
        let mut lex: Self = serde_json::from_slice(bytes)?;
        lex.reindex();
        Ok(lex)
    }
}

fn validate_surface(surface: &str) -> std::result::Result<(), String> {
    if surface.is_empty() {
        return Err("empty surface".into());
    }
    if surface.chars().any(|c| c.is_uppercase() || c.is_whitespace() || c == '+') {
        return Err(format!("surface `{surface}` must be lowercase without whitespace or `+`"));
    }
    Ok(())
}

/// Non-empty lines with 1-based line numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: usize, what: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| LexiconError::Malformed {
        line,
        reason: format!("invalid {what} `{}`", raw.trim()),
    })
}

/// Reads the inventory TSV: `surface \t definition \t is_affix(0|1)`.
pub fn load_inventory(path: &Path) -> Result<TimeIndexedLexicon> {
    parse_inventory(&read_text(path)?)
}

pub fn parse_inventory(text: &str) -> Result<TimeIndexedLexicon> {
    let mut morphemes = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in numbered_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(LexiconError::Malformed {
                line: lineno,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let surface = fields[0].trim().to_string();
        validate_surface(&surface).map_err(|reason| LexiconError::Malformed { line: lineno, reason })?;
        let is_affix = match fields[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(LexiconError::Malformed {
                    line: lineno,
                    reason: format!("is_affix must be 0 or 1, found `{other}`"),
                })
            }
        };
        if seen.insert(surface.clone(), lineno).is_some() {
            return Err(LexiconError::DuplicateSurface {
                line: lineno,
                surface,
            });
        }
        let definition = Some(fields[1].trim()).filter(|d| !d.is_empty()).map(str::to_string);
        morphemes.push(Morpheme {
            id: MorphemeId(morphemes.len() as u32),
            surface,
            definition,
            is_affix,
            phoneme_count: None,
            syllable_count: None,
        });
    }
    Ok(TimeIndexedLexicon::from_morphemes(morphemes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pronunciation {
    pub phonemes: u32,
    pub syllables: u32,
}

/// Parses CMU dictionary text. Alternate pronunciations (`WORD(2)`) are
/// ignored in favour of the first listed one; words are lowercased.
pub fn parse_cmu(text: &str, source: &str) -> (HashMap<String, Pronunciation>, Vec<SkippedRow>) {
    let mut out = HashMap::new();
    let mut skipped = Vec::new();
    for (lineno, line) in numbered_lines(text) {
        if line.starts_with(";;;") {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let Some(word) = tokens.next() else { continue };
        let phones: Vec<&str> = tokens.collect();
        let valid_phone = |p: &&str| {
            let base = p.trim_end_matches(|c: char| c.is_ascii_digit());
            !base.is_empty() && base.chars().all(|c| c.is_ascii_uppercase())
        };
        if phones.is_empty() || !phones.iter().all(valid_phone) {
            skipped.push(SkippedRow {
                source: source.to_string(),
                line: lineno,
                reason: "unparseable pronunciation".into(),
            });
            continue;
        }
        if word.ends_with(')') && word.contains('(') {
            continue;
        }
        let syllables = phones
            .iter()
            .filter(|p| p.ends_with(|c: char| c.is_ascii_digit()))
            .count() as u32;
        out.entry(word.to_lowercase()).or_insert(Pronunciation {
            phonemes: phones.len() as u32,
            syllables,
        });
    }
    (out, skipped)
}

/// One dataset row: a concept with its gloss, gold segmentation and emergence year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptItem {
    pub word: String,
    pub gloss: String,
    pub gold: Vec<MorphemeId>,
    pub emergence_year: i32,
    pub pos: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<ConceptItem>,
    pub rejected: Vec<SkippedRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Reads `word \t gloss \t gold1+gold2+... \t year \t pos`.
pub fn load_dataset(path: &Path, lexicon: &TimeIndexedLexicon) -> Result<Dataset> {
    let text = read_text(path)?;
    Ok(parse_dataset(&text, lexicon, &path.display().to_string()))
}

pub fn parse_dataset(text: &str, lexicon: &TimeIndexedLexicon, source: &str) -> Dataset {
    let mut ds = Dataset::default();
    let mut seen = HashSet::new();
    let reject = |line: usize, reason: String| SkippedRow {
        source: source.to_string(),
        line,
        reason,
    };
    for (lineno, line) in numbered_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if !(4..=5).contains(&fields.len()) {
            let r = reject(lineno, format!("expected 4 or 5 fields, found {}", fields.len()));
            ds.rejected.push(r);
            continue;
        }
        let word = fields[0].trim().to_string();
        let Ok(year) = fields[3].trim().parse::<i32>() else {
            let r = reject(lineno, format!("invalid year `{}`", fields[3].trim()));
            ds.rejected.push(r);
            continue;
        };
        if !(MIN_EMERGENCE_YEAR..=MAX_EMERGENCE_YEAR).contains(&year) {
            let r = reject(lineno, format!("year {year} outside {MIN_EMERGENCE_YEAR}-{MAX_EMERGENCE_YEAR}"));
            ds.rejected.push(r);
            continue;
        }
        let surfaces: Vec<&str> = fields[2].trim().split('+').map(str::trim).collect();
        if surfaces.is_empty() || surfaces.len() > MAX_GOLD_LEN || surfaces.iter().any(|s| s.is_empty()) {
            let r = reject(lineno, format!("gold must have 1-{MAX_GOLD_LEN} morphemes"));
            ds.rejected.push(r);
            continue;
        }
        let gold: Option<Vec<MorphemeId>> = surfaces.iter().map(|s| lexicon.lookup(s)).collect();
        let Some(gold) = gold else {
            let r = reject(lineno, format!("unresolvable gold `{}`", fields[2].trim()));
            ds.rejected.push(r);
            continue;
        };
        if !seen.insert(word.clone()) {
            let r = reject(lineno, format!("duplicate word `{word}`"));
            ds.rejected.push(r);
            continue;
        }
        let pos = fields
            .get(4)
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(str::to_string);
        ds.items.push(ConceptItem {
            word,
            gloss: fields[1].trim().to_string(),
            gold,
            emergence_year: year,
            pos,
        });
    }
    ds
}

/// First year with a non-zero token count per word, from a frequency table
/// in the same TSV schema. Used to cross-check dataset emergence years.
pub fn first_attestation_years(text: &str) -> BTreeMap<String, i32> {
    let mut out: BTreeMap<String, i32> = BTreeMap::new();
    for (_, line) in numbered_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            continue;
        }
        let (Ok(year), Ok(tokens)) = (fields[1].trim().parse::<i32>(), fields[3].trim().parse::<i64>()) else {
            continue;
        };
        if tokens > 0 {
            let e = out.entry(fields[0].trim().to_string()).or_insert(year);
            *e = (*e).min(year);
        }
    }
    out
}
