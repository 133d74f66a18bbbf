//! Dense vectors for glosses and morphemes, and exact cosine kNN.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lexicon::{Morpheme, MorphemeId, TimeIndexedLexicon};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected dim {expected}, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-finite or unparseable value `{value}`")]
    BadValue { line: usize, value: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: missing vector")]
    MissingVector { line: usize },
    #[error("no embedding for `{0}`")]
    MissingKey(String),
    #[error("vectors have different dimensions ({0} vs {1})")]
    Incompatible(usize, usize),
    #[error("cosine of a zero vector")]
    ZeroNorm,
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

/// Source of vectors keyed by arbitrary strings (surfaces, definitions, glosses).
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, key: &str) -> Option<Vec<f64>>;
}

/// File-backed table: `key \t v1 v2 ... vD` per line.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let Some((key, rest)) = line.split_once('\t') else {
                return Err(EmbeddingError::MissingVector { line: line_no });
            };
            let mut values = Vec::with_capacity(table.dim);
            for raw in rest.split_whitespace() {
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(EmbeddingError::BadValue {
                            line: line_no,
                            value: raw.to_string(),
                        })
                    }
                }
            }
            if values.is_empty() {
                return Err(EmbeddingError::MissingVector { line: line_no });
            }
            if table.keys.is_empty() {
                table.dim = values.len();
            } else if values.len() != table.dim {
                return Err(EmbeddingError::DimMismatch {
                    line: line_no,
                    expected: table.dim,
                    found: values.len(),
                });
            }
            if table.index.contains_key(key) {
                return Err(EmbeddingError::DuplicateKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            table.insert_unchecked(key.to_string(), &values);
        }
        Ok(table)
    }

    /// Builds a table from in-memory rows; all rows must share one dim.
    pub fn from_rows<I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = Self::default();
        for (i, (key, values)) in rows.into_iter().enumerate() {
            if table.keys.is_empty() {
                table.dim = values.len();
            } else if values.len() != table.dim {
                return Err(EmbeddingError::DimMismatch {
                    line: i + 1,
                    expected: table.dim,
                    found: values.len(),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::BadValue {
                    line: i + 1,
                    value: "non-finite".into(),
                });
            }
            if table.index.contains_key(&key) {
                return Err(EmbeddingError::DuplicateKey { line: i + 1, key });
            }
            table.insert_unchecked(key, &values);
        }
        Ok(table)
    }

    fn insert_unchecked(&mut self, key: String, values: &[f64]) {
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.data.extend_from_slice(values);
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index
            .get(key)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Serializes in the same text format `parse` reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, key) in self.keys.iter().enumerate() {
            out.push_str(key);
            out.push('\t');
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, key: &str) -> Option<Vec<f64>> {
        self.get(key).map(<[f64]>::to_vec)
    }
}

/// Deterministic unit vector derived from a hash of `(seed, dim, key)`.
pub fn pseudo_embedding(key: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim > 0, "pseudo_embedding needs dim > 0");
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((dim as u64).to_le_bytes());
    hasher.update(key.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Provider that answers every key with a pseudo embedding.
#[derive(Debug, Clone, Copy)]
pub struct PseudoProvider {
    pub dim: usize,
    pub seed: u64,
}

impl EmbeddingProvider for PseudoProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, key: &str) -> Option<Vec<f64>> {
        Some(pseudo_embedding(key, self.dim, self.seed))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalized(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok(a.iter().map(|x| x / n).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EmbeddingError::Incompatible(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Normalized mean of the surface vector and, when the provider knows it,
/// the definition vector. Without a definition the surface vector is returned as is.
pub fn morpheme_vector(morpheme: &Morpheme, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>> {
    let surface = provider
        .embed(&morpheme.surface)
        .ok_or_else(|| EmbeddingError::MissingKey(morpheme.surface.clone()))?;
    let Some(definition) = morpheme.definition.as_deref().and_then(|d| provider.embed(d)) else {
        return Ok(surface);
    };
    let a = normalized(&surface)?;
    let b = normalized(&definition)?;
    let mean: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
    // Antipodal surface/definition pairs fall back to the surface direction.
    normalized(&mean).or(Ok(a))
}

/// Exact cosine search over morpheme vectors.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    ids: Vec<MorphemeId>,
    keys: Vec<String>,
    dim: usize,
    /// Unit-normalized rows.
    unit: Vec<f64>,
}

impl NeighborIndex {
    pub fn new<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MorphemeId, String, Vec<f64>)>,
    {
        let mut index = Self {
            ids: Vec::new(),
            keys: Vec::new(),
            dim: 0,
            unit: Vec::new(),
        };
        for (id, key, v) in entries {
            if index.ids.is_empty() {
                index.dim = v.len();
            } else if v.len() != index.dim {
                return Err(EmbeddingError::Incompatible(index.dim, v.len()));
            }
            index.unit.extend(normalized(&v)?);
            index.ids.push(id);
            index.keys.push(key);
        }
        Ok(index)
    }

    /// Indexes every inventory morpheme through `morpheme_vector`.
    pub fn from_lexicon(lexicon: &TimeIndexedLexicon, provider: &dyn EmbeddingProvider) -> Result<Self> {
        let entries = lexicon
            .morphemes()
            .iter()
            .map(|m| Ok((m.id, m.surface.clone(), morpheme_vector(m, provider)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, row: usize) -> &[f64] {
        &self.unit[row * self.dim..(row + 1) * self.dim]
    }

    pub fn row_of(&self, id: MorphemeId) -> Option<usize> {
        // Rows built by `from_lexicon` coincide with ids.
        match self.ids.get(id.index()) {
            Some(&found) if found == id => Some(id.index()),
            _ => self.ids.iter().position(|&x| x == id),
        }
    }

    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        self.knn_filtered(query, k, |_| true)
    }

    /// Top-`k` rows accepted by `keep`, by descending cosine then ascending key.
    pub fn knn_filtered<F>(&self, query: &[f64], k: usize, keep: F) -> Result<Vec<Neighbor>>
    where
        F: Fn(MorphemeId) -> bool,
    {
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        if query.len() != self.dim {
            return Err(EmbeddingError::Incompatible(self.dim, query.len()));
        }
        let q = normalized(query)?;
        let mut scored: Vec<Neighbor> = (0..self.len())
            .filter(|&row| keep(self.ids[row]))
            .map(|row| Neighbor {
                id: self.ids[row],
                row,
                similarity: dot(self.vector(row), &q).clamp(-1.0, 1.0),
            })
            .collect();
        let order = |a: &Neighbor, b: &Neighbor| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| self.keys[a.row].cmp(&self.keys[b.row]))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored)
    }

    pub fn key(&self, row: usize) -> &str {
        &self.keys[row]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: MorphemeId,
    pub row: usize,
    pub similarity: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn load_table() {
        let t = EmbeddingTable::parse("a\t1 0 0 0\nb\t0 1 0 0\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 4);
        assert_eq!(t.get("b").unwrap(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn load_errors() {
        let err = EmbeddingTable::parse("a\t1 0 0 0\nb\t0 1 0\n").unwrap_err();
        assert!(matches!(err, EmbeddingError::DimMismatch { line: 2, expected: 4, found: 3 }));
        let err = EmbeddingTable::parse("a\t1 0\na\t0 1\n").unwrap_err();
        assert!(err.to_string().contains("`a`"));
        let err = EmbeddingTable::parse("a\t1 NaN\n").unwrap_err();
        assert!(matches!(err, EmbeddingError::BadValue { .. }));
        let err = EmbeddingTable::parse("a\t1 inf\n").unwrap_err();
        assert!(matches!(err, EmbeddingError::BadValue { .. }));
    }

    #[test]
    fn text_round_trip() {
        let t = EmbeddingTable::parse("a\t0.5 -0.25\nb c\t1 2\n").unwrap();
        let again = EmbeddingTable::parse(&t.to_text()).unwrap();
        assert_eq!(again.get("b c"), t.get("b c"));
    }

    #[test]
    fn pseudo_is_deterministic_unit() {
        let a = pseudo_embedding("laundr", 32, 7);
        assert_eq!(a, pseudo_embedding("laundr", 32, 7));
        assert!(close(norm(&a), 1.0, 1e-9));
        let b = pseudo_embedding("y", 32, 7);
        assert!(cosine(&a, &b).unwrap() < 1.0);
        assert_ne!(a, pseudo_embedding("laundr", 32, 8));
    }

    fn morpheme(surface: &str, definition: Option<&str>) -> Morpheme {
        Morpheme {
            id: MorphemeId(0),
            surface: surface.into(),
            definition: definition.map(str::to_string),
            is_affix: false,
            phoneme_count: None,
            syllable_count: None,
        }
    }

    #[test]
    fn morpheme_vector_fusion() {
        let t = EmbeddingTable::parse("a\t1 0\nbe a\t0 1\nsame\t0.6 0.8\nsame def\t0.6 0.8\nraw\t3 4\n").unwrap();
        assert_eq!(morpheme_vector(&morpheme("raw", None), &t).unwrap(), vec![3.0, 4.0]);
        // Unknown definition text also falls back to the surface vector.
        assert_eq!(morpheme_vector(&morpheme("raw", Some("nope")), &t).unwrap(), vec![3.0, 4.0]);
        let v = morpheme_vector(&morpheme("same", Some("same def")), &t).unwrap();
        assert!(close(v[0], 0.6, 1e-12) && close(v[1], 0.8, 1e-12));
        let v = morpheme_vector(&morpheme("a", Some("be a")), &t).unwrap();
        assert!(close(cosine(&v, &[1.0, 0.0]).unwrap(), std::f64::consts::FRAC_1_SQRT_2, 1e-12));
        assert!(close(cosine(&v, &[0.0, 1.0]).unwrap(), std::f64::consts::FRAC_1_SQRT_2, 1e-12));
        assert!(matches!(morpheme_vector(&morpheme("zz", None), &t), Err(EmbeddingError::MissingKey(_))));
    }

    #[test]
    fn cosine_cases() {
        let v = [0.3, -0.2, 0.9];
        assert!(close(cosine(&v, &v).unwrap(), 1.0, 1e-12));
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(close(cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), std::f64::consts::FRAC_1_SQRT_2, 1e-12));
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(EmbeddingError::ZeroNorm)));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(EmbeddingError::Incompatible(1, 2))));
    }

    fn index_of(vectors: &[(&str, Vec<f64>)]) -> NeighborIndex {
        NeighborIndex::new(
            vectors
                .iter()
                .enumerate()
                .map(|(i, (k, v))| (MorphemeId(i as u32), k.to_string(), v.clone())),
        )
        .unwrap()
    }

    #[test]
    fn knn_basics() {
        let idx = index_of(&[("b", vec![1.0, 0.0]), ("a", vec![1.0, 0.0]), ("c", vec![0.0, 1.0])]);
        let hits = idx.knn(&[1.0, 0.0], 10).unwrap();
        assert_eq!(hits.len(), 3);
        // Tie at similarity 1 broken by key.
        assert_eq!(idx.key(hits[0].row), "a");
        assert_eq!(idx.key(hits[1].row), "b");
        assert!(close(hits[0].similarity, 1.0, 1e-12));
        let empty = NeighborIndex::new(std::iter::empty()).unwrap();
        assert!(empty.knn(&[1.0], 3).unwrap().is_empty());
    }

    #[test]
    fn knn_matches_exhaustive_sort() {
        let rows: Vec<(String, Vec<f64>)> =
            (0..5).map(|i| (format!("k{i}"), pseudo_embedding(&format!("k{i}"), 6, 1))).collect();
        let idx = NeighborIndex::new(rows.iter().enumerate().map(|(i, (k, v))| (MorphemeId(i as u32), k.clone(), v.clone()))).unwrap();
        let q = pseudo_embedding("query", 6, 1);
        let mut brute: Vec<(f64, String)> = rows.iter().map(|(k, v)| (cosine(v, &q).unwrap(), k.clone())).collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let got: Vec<&str> = idx.knn(&q, 3).unwrap().iter().map(|n| idx.key(n.row)).collect();
        let want: Vec<&str> = brute.iter().take(3).map(|(_, k)| k.as_str()).collect();
        assert_eq!(got, want);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cosine_symmetric_scale_invariant(a in proptest::collection::vec(-5.0f64..5.0, 4),
                                                b in proptest::collection::vec(-5.0f64..5.0, 4),
                                                lambda in 0.01f64..100.0) {
                prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
                let ab = cosine(&a, &b).unwrap();
                prop_assert!((ab - cosine(&b, &a).unwrap()).abs() < 1e-12);
                let scaled: Vec<f64> = a.iter().map(|x| x * lambda).collect();
                prop_assert!((ab - cosine(&scaled, &b).unwrap()).abs() < 1e-9);
            }

            #[test]
            fn knn_is_prefix_of_exhaustive(n in 1usize..60, k in 1usize..70, seed in 0u64..1000) {
                let rows: Vec<(MorphemeId, String, Vec<f64>)> = (0..n)
                    .map(|i| (MorphemeId(i as u32), format!("m{i:03}"), pseudo_embedding(&format!("m{i}"), 5, seed)))
                    .collect();
                let idx = NeighborIndex::new(rows.clone()).unwrap();
                let q = pseudo_embedding("q", 5, seed);
                let mut full: Vec<(f64, String)> = rows.iter().map(|(_, key, v)| (cosine(v, &q).unwrap(), key.clone())).collect();
                full.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let got = idx.knn(&q, k).unwrap();
                prop_assert_eq!(got.len(), k.min(n));
                for (hit, (sim, key)) in got.iter().zip(&full) {
                    prop_assert_eq!(idx.key(hit.row), key.as_str());
                    prop_assert!((hit.similarity - sim).abs() < 1e-12);
                }
            }
        }
    }
}
