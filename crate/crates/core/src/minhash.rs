//! Jaccard similarity through MinHash, in two map-side flavours.
//!
//! `minhash_full` emits `((w, j) -> h_j(t))` for every word of every
//! document and min-reduces. `minhash_sampled` drops an emission unless
//! `h_j(t) <= c·ln(Dk)/#(w)`. The minimum of `#(w)` uniforms is below that
//! threshold except with probability `(Dk)^-c`, so the sampled table almost
//! always equals the full one while shipping `O(Dk log Dk)` values instead of
//! `k · Σ|doc|`.

use std::collections::HashMap;
use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, Document, WordId, WordPair};
use crate::engine::{mix64, run_job, Combiner, Emitter, JobConfig, JobError, JobMetrics, MapperContext};
use crate::exact::{sort_scores, PairScore};

const HASH_INDEX_SALT: u64 = 0x6A09_E667_F3BC_C908;
const DOC_SALT: u64 = 0xBB67_AE85_84CA_A73B;
const UNIT_SCALE: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinHashError {
    #[error("number of hash functions must be at least 1")]
    ZeroHashes,
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("constant must be finite and positive, got {0}")]
    InvalidConstant(f64),
    #[error("words {0} and {1} share no hash index with a recorded minimum")]
    NoSharedIndex(u32, u32),
    #[error(transparent)]
    Job(#[from] JobError),
}

/// `k` hash functions `h_j: doc_id -> [0, 1)` drawn from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HashFamily {
    pub k: usize,
    pub master_seed: u64,
    /// Threshold constant of the sampled mapper.
    pub c: f64,
}

impl HashFamily {
    pub fn new(k: usize, master_seed: u64) -> Result<Self, MinHashError> {
        Self::with_constant(k, master_seed, 3.0)
    }

    pub fn with_constant(k: usize, master_seed: u64, c: f64) -> Result<Self, MinHashError> {
        if k == 0 {
            return Err(MinHashError::ZeroHashes);
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(MinHashError::InvalidConstant(c));
        }
        Ok(HashFamily { k, master_seed, c })
    }

    #[inline]
    pub fn hash_value(&self, j: usize, doc_id: u32) -> f64 {
        hash_value(self, j, doc_id)
    }

    /// `c · ln(D k) / #(w)`.
    pub fn sample_threshold(&self, dict_size: usize, count: u64) -> f64 {
        let dk = (dict_size as f64) * (self.k as f64);
        self.c * dk.ln() / count as f64
    }
}

/// 64-bit mix of `(master_seed, j, doc_id)` scaled to `[0, 1)` with 53 bits.
pub fn hash_value(family: &HashFamily, j: usize, doc_id: u32) -> f64 {
    let fn_seed = mix64(family.master_seed ^ mix64((j as u64).wrapping_add(HASH_INDEX_SALT)));
    let h = mix64(fn_seed ^ mix64((doc_id as u64).wrapping_add(DOC_SALT)));
    (h >> 11) as f64 * UNIT_SCALE
}

/// A hash value and the document that produced it. Ordered by value, then
/// by doc id, so equal values from different documents never compare equal.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MinEntry {
    pub value: f64,
    pub doc_id: u32,
}

impl PartialEq for MinEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for MinEntry {}

impl PartialOrd for MinEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MinEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.total_cmp(&other.value).then(self.doc_id.cmp(&other.doc_id))
    }
}

impl std::hash::Hash for MinEntry {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.value.to_bits().hash(state);
        self.doc_id.hash(state);
    }
}

/// `g_j(w)` for every word and hash index; `None` where nothing was emitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashTable {
    k: usize,
    rows: Vec<Option<MinEntry>>,
}

impl MinHashTable {
    fn new(num_words: usize, k: usize) -> Self {
        MinHashTable { k, rows: vec![None; num_words * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_words(&self) -> usize {
        self.rows.len() / self.k
    }

    pub fn get(&self, w: WordId, j: usize) -> Option<MinEntry> {
        self.rows.get(w.index() * self.k + j).copied().flatten()
    }

    pub fn row(&self, w: WordId) -> &[Option<MinEntry>] {
        &self.rows[w.index() * self.k..(w.index() + 1) * self.k]
    }

    pub fn present_entries(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    /// `(word, j, entry)` for every present entry, word-major.
    pub fn entries(&self) -> impl Iterator<Item = (WordId, usize, MinEntry)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter_map(move |(i, r)| r.map(|e| (WordId((i / self.k) as u32), i % self.k, e)))
    }
}

#[derive(Debug, Clone)]
pub struct MinHashRun {
    pub table: MinHashTable,
    pub metrics: JobMetrics,
}

fn build_table(corpus: &Corpus, family: &HashFamily, results: Vec<((WordId, u32), MinEntry)>) -> MinHashTable {
    let mut table = MinHashTable::new(corpus.num_words(), family.k);
    for ((w, j), e) in results {
        table.rows[w.index() * family.k + j as usize] = Some(e);
    }
    table
}

fn min_reduce(_: &(WordId, u32), values: &[MinEntry]) -> Result<MinEntry, String> {
    values.iter().copied().min().ok_or_else(|| "empty group".to_string())
}

fn min_combine(a: &MinEntry, b: &MinEntry) -> MinEntry {
    *a.min(b)
}

#[derive(Debug, Clone, Copy)]
pub struct MinHashOptions {
    pub job: JobConfig,
    pub combine: bool,
}

impl Default for MinHashOptions {
    fn default() -> Self {
        MinHashOptions { job: JobConfig::new(0), combine: false }
    }
}

fn run_minhash<M>(corpus: &Corpus, family: &HashFamily, mapper: M, options: &MinHashOptions) -> Result<MinHashRun, MinHashError>
where
    M: Fn(&Document, &mut MapperContext<'_>, &mut Emitter<(WordId, u32), MinEntry>) -> Result<(), String> + Sync,
{
    let combiner: Option<Combiner<'_, MinEntry>> =
        if options.combine { Some(&min_combine) } else { None };
    let out = run_job(corpus, mapper, min_reduce, combiner, &options.job)?;
    Ok(MinHashRun { table: build_table(corpus, family, out.results), metrics: out.metrics })
}

/// Every word of every document emits all `k` hashes of the document.
pub fn minhash_full(corpus: &Corpus, family: &HashFamily, options: &MinHashOptions) -> Result<MinHashRun, MinHashError> {
    let k = family.k;
    let mapper = |doc: &Document, _: &mut MapperContext<'_>, out: &mut Emitter<(WordId, u32), MinEntry>| {
        let hashes: Vec<f64> = (0..k).map(|j| family.hash_value(j, doc.doc_id)).collect();
        for &w in doc.words() {
            for (j, &value) in hashes.iter().enumerate() {
                out.emit((w, j as u32), MinEntry { value, doc_id: doc.doc_id });
            }
        }
        Ok(())
    };
    run_minhash(corpus, family, mapper, options)
}

/// Emits `h_j(t)` for word `w` only when it is at most `c·ln(Dk)/#(w)`.
pub fn minhash_sampled(corpus: &Corpus, family: &HashFamily, options: &MinHashOptions) -> Result<MinHashRun, MinHashError> {
    let k = family.k;
    let d = corpus.num_words();
    let mapper = |doc: &Document, ctx: &mut MapperContext<'_>, out: &mut Emitter<(WordId, u32), MinEntry>| {
        let hashes: Vec<f64> = (0..k).map(|j| family.hash_value(j, doc.doc_id)).collect();
        for &w in doc.words() {
            let threshold = family.sample_threshold(d, ctx.background[w.index()]);
            for (j, &value) in hashes.iter().enumerate() {
                if value <= threshold {
                    out.emit((w, j as u32), MinEntry { value, doc_id: doc.doc_id });
                }
            }
        }
        Ok(())
    };
    run_minhash(corpus, family, mapper, options)
}

/// Fraction of hash indices (where both rows are present) on which the two
/// words share the same minimum.
pub fn jaccard_estimate(table: &MinHashTable, x: WordId, y: WordId) -> Result<f64, MinHashError> {
    let (rx, ry) = (table.row(x), table.row(y));
    let mut shared = 0u32;
    let mut equal = 0u32;
    for (a, b) in rx.iter().zip(ry) {
        if let (Some(a), Some(b)) = (a, b) {
            shared += 1;
            equal += u32::from(a == b);
        }
    }
    if shared == 0 {
        return Err(MinHashError::NoSharedIndex(x.0, y.0));
    }
    Ok(equal as f64 / shared as f64)
}

/// Estimates for every pair with at least one collision, descending.
pub fn minhash_all_pairs(table: &MinHashTable, min_estimate: f64) -> Vec<PairScore> {
    let mut collisions: HashMap<WordPair, u32> = HashMap::new();
    let mut buckets: HashMap<MinEntry, Vec<WordId>> = HashMap::new();
    for j in 0..table.k {
        buckets.clear();
        for w in 0..table.num_words() {
            let w = WordId(w as u32);
            if let Some(e) = table.get(w, j) {
                buckets.entry(e).or_default().push(w);
            }
        }
        for words in buckets.values() {
            for (i, &a) in words.iter().enumerate() {
                for &b in &words[i + 1..] {
                    *collisions.entry(WordPair::new(a, b)).or_insert(0) += 1;
                }
            }
        }
    }
    let mut out: Vec<PairScore> = collisions
        .into_keys()
        .filter_map(|pair| {
            let score = jaccard_estimate(table, pair.first(), pair.second()).ok()?;
            (score >= min_estimate).then_some(PairScore { pair, score })
        })
        .collect();
    sort_scores(&mut out);
    out
}

/// `(word, j)` rows that differ between two tables, presence included.
pub fn table_mismatches(a: &MinHashTable, b: &MinHashTable) -> usize {
    assert_eq!(a.k, b.k, "tables built with different k");
    let n = a.rows.len().max(b.rows.len());
    (0..n).filter(|&i| a.rows.get(i).copied().flatten() != b.rows.get(i).copied().flatten()).count()
}

/// `k = ceil(c / ε)`. Ratios within 1e-9 (relative) of an integer are taken
/// as that integer, so `1.5 / 0.003` gives 500.
pub fn choose_k(epsilon: f64, c_factor: f64) -> Result<usize, MinHashError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(MinHashError::InvalidEpsilon(epsilon));
    }
    if !(c_factor.is_finite() && c_factor >= 1.0) {
        return Err(MinHashError::InvalidConstant(c_factor));
    }
    let raw = c_factor / epsilon;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { raw.ceil() };
    Ok(k as usize)
}

/// Bound on the expected sampled shuffle: `D k c ln(Dk)`.
pub fn sampled_shuffle_bound(dict_size: usize, family: &HashFamily) -> f64 {
    let dk = dict_size as f64 * family.k as f64;
    dk * family.c * dk.ln()
}
