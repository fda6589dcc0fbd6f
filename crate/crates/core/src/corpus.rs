//! Corpus data model: documents as sets of dictionary words, plus the
//! per-word document frequencies (the background model) that every mapper
//! and reducer is allowed to read.
//!
//! Documents are indicator vectors. Repeated tokens inside one document are
//! collapsed, so `#(w)` is the number of documents containing `w` and
//! `#(w1, w2)` is the number of documents containing both.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Dense index of a word in the dictionary, `0 <= id < D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct WordId(pub u32);

impl WordId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for WordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unordered word pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct WordPair(WordId, WordId);

impl WordPair {
    pub fn new(a: WordId, b: WordId) -> Self {
        if a <= b {
            WordPair(a, b)
        } else {
            WordPair(b, a)
        }
    }

    #[inline]
    pub fn first(self) -> WordId {
        self.0
    }

    #[inline]
    pub fn second(self) -> WordId {
        self.1
    }

    pub fn is_self_pair(self) -> bool {
        self.0 == self.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: u32,
    words: Vec<WordId>,
}

impl Document {
    /// Builds a document from arbitrary word ids; duplicates are collapsed.
    pub fn new(doc_id: u32, mut words: Vec<WordId>) -> Self {
        words.sort_unstable();
        words.dedup();
        Document { doc_id, words }
    }

    /// Sorted, distinct words.
    pub fn words(&self) -> &[WordId] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of unordered word pairs, `C(|doc|, 2)`.
    pub fn pair_count(&self) -> u64 {
        let n = self.words.len() as u64;
        n * n.saturating_sub(1) / 2
    }

    /// Unordered pairs in lexicographic order of `(first, second)`.
    pub fn pairs(&self) -> impl Iterator<Item = WordPair> + '_ {
        self.words.iter().enumerate().flat_map(move |(i, &a)| {
            self.words[i + 1..].iter().map(move |&b| WordPair(a, b))
        })
    }
}

/// Token <-> id mapping. Ids are handed out in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    tokens: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, token: &str) -> WordId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = WordId(self.tokens.len() as u32);
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<WordId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: WordId) -> &str {
        &self.tokens[id.index()]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: document has {len} distinct words, limit is {limit}")]
    DocumentTooLong { line: usize, len: usize, limit: usize },
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
}

/// Counters recorded while reading a corpus file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub lines: usize,
    pub empty_lines_skipped: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Reject documents with more distinct (kept) words than this.
    pub max_doc_len: Option<usize>,
    /// Keep only these tokens; everything else is dropped before interning.
    pub vocabulary: Option<HashSet<String>>,
}

/// Immutable document store with its dictionary and background model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    dictionary: Dictionary,
    word_count: Vec<u64>,
    max_doc_len: usize,
    stats: LoadStats,
}

impl Corpus {
    /// Assembles a corpus from documents whose word ids index `dictionary`.
    /// Document ids are reassigned to positions. Counts are computed here.
    pub fn from_documents(dictionary: Dictionary, documents: Vec<Vec<WordId>>) -> Self {
        let mut builder = CorpusBuilder::with_dictionary(dictionary);
        for words in documents {
            builder.push_ids(words);
        }
        builder.finish()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    /// `#(w)` for every word, indexed by `WordId`.
    pub fn word_counts(&self) -> &[u64] {
        &self.word_count
    }

    pub fn count(&self, w: WordId) -> u64 {
        self.word_count.get(w.index()).copied().unwrap_or(0)
    }

    /// N, the number of (non-empty) documents.
    pub fn num_docs(&self) -> usize {
        self.documents.len()
    }

    /// D, the dictionary size.
    pub fn num_words(&self) -> usize {
        self.dictionary.len()
    }

    /// L, the largest document length.
    pub fn max_doc_len(&self) -> usize {
        self.max_doc_len
    }

    pub fn load_stats(&self) -> LoadStats {
        self.stats
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn token(&self, w: WordId) -> &str {
        self.dictionary.token(w)
    }

    /// Σ_docs C(|doc|, 2): the shuffle size of the naive pair mapper.
    pub fn naive_shuffle_size(&self) -> u64 {
        self.documents.iter().map(Document::pair_count).sum()
    }

    /// Σ_docs |doc|.
    pub fn total_postings(&self) -> u64 {
        self.documents.iter().map(|d| d.len() as u64).sum()
    }

    /// Same documents (and doc ids) in the order given by `order`, which
    /// must be a permutation of `0..N`.
    pub fn reordered(&self, order: &[usize]) -> Corpus {
        assert_eq!(order.len(), self.documents.len(), "not a permutation");
        let documents = order.iter().map(|&i| self.documents[i].clone()).collect();
        Corpus { documents, ..self.clone() }
    }

    /// Writes the corpus in the line-per-document text format.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for doc in &self.documents {
            let mut first = true;
            for &w in doc.words() {
                if !first {
                    out.write_all(b" ")?;
                }
                out.write_all(self.token(w).as_bytes())?;
                first = false;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Incremental corpus construction; counts are kept in step with documents.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    documents: Vec<Document>,
    dictionary: Dictionary,
    word_count: Vec<u64>,
    max_doc_len: usize,
    stats: LoadStats,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dictionary(dictionary: Dictionary) -> Self {
        let word_count = vec![0; dictionary.len()];
        CorpusBuilder { dictionary, word_count, ..Self::default() }
    }

    /// Interns `tokens` and appends them as one document. Empty input is
    /// skipped. Returns the document length after deduplication.
    pub fn push_tokens<'a, I>(&mut self, tokens: I) -> usize
    where
        I: IntoIterator<Item = &'a str>,
    {
        let ids: Vec<WordId> = tokens.into_iter().map(|t| self.dictionary.intern(t)).collect();
        self.push_ids(ids)
    }

    pub fn push_ids(&mut self, ids: Vec<WordId>) -> usize {
        if ids.is_empty() {
            self.stats.empty_lines_skipped += 1;
            return 0;
        }
        let doc = Document::new(self.documents.len() as u32, ids);
        if self.word_count.len() < self.dictionary.len() {
            self.word_count.resize(self.dictionary.len(), 0);
        }
        for &w in doc.words() {
            self.word_count[w.index()] += 1;
        }
        self.max_doc_len = self.max_doc_len.max(doc.len());
        let len = doc.len();
        self.documents.push(doc);
        len
    }

    pub fn finish(mut self) -> Corpus {
        self.word_count.resize(self.dictionary.len(), 0);
        Corpus {
            documents: self.documents,
            dictionary: self.dictionary,
            word_count: self.word_count,
            max_doc_len: self.max_doc_len,
            stats: self.stats,
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, max_doc_len: Option<usize>) -> Result<Corpus, CorpusError> {
    let options = LoadOptions { max_doc_len, vocabulary: None };
    load_corpus_with(path, &options)
}

pub fn load_corpus_with(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    read_corpus(BufReader::new(file), options)
}

/// Reads one document per line. Tokens are split on ASCII whitespace.
pub fn read_corpus<R: BufRead>(reader: R, options: &LoadOptions) -> Result<Corpus, CorpusError> {
    let mut builder = CorpusBuilder::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        builder.stats.lines += 1;
        let mut scratch: Vec<&str> = Vec::new();
        scratch.extend(line.split_ascii_whitespace().filter(|t| match &options.vocabulary {
            Some(v) => v.contains(*t),
            None => true,
        }));
        if let Some(limit) = options.max_doc_len {
            let distinct: HashSet<&str> = scratch.iter().copied().collect();
            if distinct.len() > limit {
                return Err(CorpusError::DocumentTooLong { line: idx + 1, len: distinct.len(), limit });
            }
        }
        builder.push_tokens(scratch.iter().copied());
    }
    Ok(builder.finish())
}

/// Inverse-CDF sampler over ranks `0..n` with `P(r) ∝ (r + 1)^(-skew)`.
#[derive(Debug, Clone)]
pub struct ZipfTable {
    cdf: Vec<f64>,
}

impl ZipfTable {
    pub fn new(n: usize, skew: f64) -> Self {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for r in 0..n {
            acc += ((r + 1) as f64).powf(-skew);
            cdf.push(acc);
        }
        for v in &mut cdf {
            *v /= acc;
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        ZipfTable { cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// Zipf-distributed synthetic corpus. Every document has exactly `doc_len`
/// distinct words; the word of rank `r` is spelled `w{r}`.
pub fn generate_synthetic(
    n_docs: usize,
    dict_size: usize,
    doc_len: usize,
    skew: f64,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    if doc_len == 0 {
        return Err(CorpusError::InvalidParameter("doc_len must be at least 1".into()));
    }
    if dict_size < doc_len {
        return Err(CorpusError::InvalidParameter(format!(
            "dict_size ({dict_size}) must be at least doc_len ({doc_len})"
        )));
    }
    if !(skew >= 0.0 && skew.is_finite()) {
        return Err(CorpusError::InvalidParameter(format!("skew must be finite and >= 0, got {skew}")));
    }
    let table = ZipfTable::new(dict_size, skew);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = CorpusBuilder::new();
    let mut seen = HashSet::with_capacity(doc_len);
    let mut ranks = Vec::with_capacity(doc_len);
    let mut attempts_left;
    for _ in 0..n_docs {
        seen.clear();
        ranks.clear();
        attempts_left = 64 * doc_len;
        while ranks.len() < doc_len && attempts_left > 0 {
            let r = table.sample(&mut rng);
            if seen.insert(r) {
                ranks.push(r);
            }
            attempts_left -= 1;
        }
        // Heavy skew with doc_len close to dict_size: fill from the head.
        let mut r = 0;
        while ranks.len() < doc_len {
            if seen.insert(r) {
                ranks.push(r);
            }
            r += 1;
        }
        let tokens: Vec<String> = ranks.iter().map(|r| format!("w{r}")).collect();
        builder.push_tokens(tokens.iter().map(String::as_str));
    }
    Ok(builder.finish())
}

/// The Ω(DL) construction: `D / L` groups of `L` words, one document per
/// group, each document repeated `L` times. Every intra-group pair has
/// similarity exactly 1 under every measure, and `N = D`.
pub fn generate_lower_bound(dict_size: usize, group_len: usize) -> Result<Corpus, CorpusError> {
    if group_len == 0 || !dict_size.is_multiple_of(group_len) {
        return Err(CorpusError::InvalidParameter(format!(
            "group length {group_len} must divide dictionary size {dict_size}"
        )));
    }
    let mut builder = CorpusBuilder::new();
    for g in 0..dict_size / group_len {
        let tokens: Vec<String> = (0..group_len).map(|i| format!("g{g}_{i}")).collect();
        for _ in 0..group_len {
            builder.push_tokens(tokens.iter().map(String::as_str));
        }
    }
    Ok(builder.finish())
}

/// Occurrence pattern for one planted word pair `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedPair {
    pub both: u64,
    pub only_x: u64,
    pub only_y: u64,
}

impl PlantedPair {
    /// Pair with `#(x) = #(y) = count` and cosine `both / count`.
    pub fn symmetric(count: u64, both: u64) -> Self {
        assert!(both <= count);
        PlantedPair { both, only_x: count - both, only_y: count - both }
    }
}

/// Corpus with one isolated word pair per entry of `pairs`, words spelled
/// `p{i}x` / `p{i}y`. Optionally followed by a lower-bound block of
/// `lower_bound = (D, L)` so that the corpus also carries saturated pairs.
pub fn generate_planted(pairs: &[PlantedPair], lower_bound: Option<(usize, usize)>) -> Result<Corpus, CorpusError> {
    let mut builder = CorpusBuilder::new();
    for (i, p) in pairs.iter().enumerate() {
        let x = format!("p{i}x");
        let y = format!("p{i}y");
        if p.both + p.only_x == 0 || p.both + p.only_y == 0 {
            return Err(CorpusError::InvalidParameter(format!("planted pair {i} has a word that never occurs")));
        }
        for _ in 0..p.both {
            builder.push_tokens([x.as_str(), y.as_str()]);
        }
        for _ in 0..p.only_x {
            builder.push_tokens([x.as_str()]);
        }
        for _ in 0..p.only_y {
            builder.push_tokens([y.as_str()]);
        }
    }
    if let Some((d, l)) = lower_bound {
        let block = generate_lower_bound(d, l)?;
        for doc in block.documents() {
            builder.push_tokens(doc.words().iter().map(|&w| block.token(w)));
        }
    }
    Ok(builder.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Corpus {
        read_corpus(text.as_bytes(), &LoadOptions::default()).unwrap()
    }

    fn recount(c: &Corpus) -> Vec<u64> {
        let mut counts = vec![0; c.num_words()];
        for d in c.documents() {
            for w in d.words() {
                counts[w.index()] += 1;
            }
        }
        counts
    }

    #[test]
    fn small_file_counts() {
        let c = parse("a b\na b\na c");
        assert_eq!((c.num_docs(), c.num_words(), c.max_doc_len()), (3, 3, 2));
        let id = |t| c.dictionary().get(t).unwrap();
        assert_eq!(c.count(id("a")), 3);
        assert_eq!(c.count(id("b")), 2);
        assert_eq!(c.count(id("c")), 1);
        assert_eq!(id("a"), WordId(0));
        assert_eq!(id("c"), WordId(2));
    }

    #[test]
    fn empty_input() {
        let c = parse("");
        assert_eq!((c.num_docs(), c.num_words()), (0, 0));
    }

    #[test]
    fn duplicate_tokens_collapse() {
        let c = parse("a a b");
        assert_eq!(c.documents()[0].len(), 2);
        assert_eq!(c.count(WordId(0)), 1);
    }

    #[test]
    fn empty_lines_skipped_and_recorded() {
        let c = parse("a b\n\n   \nc\n");
        assert_eq!(c.num_docs(), 2);
        assert_eq!(c.load_stats(), LoadStats { lines: 4, empty_lines_skipped: 2 });
        assert_eq!(c.documents()[1].doc_id, 1);
    }

    #[test]
    fn max_doc_len_rejects_with_line_number() {
        let opts = LoadOptions { max_doc_len: Some(2), vocabulary: None };
        let err = read_corpus("a b\na b c\n".as_bytes(), &opts).unwrap_err();
        match err {
            CorpusError::DocumentTooLong { line, len, limit } => assert_eq!((line, len, limit), (2, 3, 2)),
            other => panic!("unexpected {other}"),
        }
        // duplicates do not count toward the limit
        assert!(read_corpus("a a a b\n".as_bytes(), &opts).is_ok());
    }

    #[test]
    fn vocabulary_filter() {
        let vocab: HashSet<String> = ["a", "c"].iter().map(|s| s.to_string()).collect();
        let opts = LoadOptions { max_doc_len: None, vocabulary: Some(vocab) };
        let c = read_corpus("a b\nb\na c".as_bytes(), &opts).unwrap();
        assert_eq!(c.num_docs(), 2);
        assert_eq!(c.num_words(), 2);
        assert!(c.dictionary().get("b").is_none());
    }

    #[test]
    fn load_from_file_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "x y z\nz q\n").unwrap();
        let a = load_corpus(&path, None).unwrap();
        let b = load_corpus(&path, None).unwrap();
        assert_eq!(a, b);
        assert!(load_corpus(dir.path().join("missing.txt"), None).is_err());
    }

    #[test]
    fn synthetic_shapes() {
        let c = generate_synthetic(0, 10, 3, 1.0, 1).unwrap();
        assert!(c.is_empty());
        let c = generate_synthetic(100, 50, 5, 0.0, 7).unwrap();
        assert_eq!(c.num_docs(), 100);
        assert_eq!(c.max_doc_len(), 5);
        assert!(c.documents().iter().all(|d| d.len() == 5));
        assert_eq!(recount(&c), c.word_counts());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(200, 80, 6, 1.1, 99).unwrap();
        let b = generate_synthetic(200, 80, 6, 1.1, 99).unwrap();
        let (mut ta, mut tb) = (Vec::new(), Vec::new());
        a.write_text(&mut ta).unwrap();
        b.write_text(&mut tb).unwrap();
        assert_eq!(ta, tb);
        let c = generate_synthetic(200, 80, 6, 1.1, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_extreme_skew_fills_documents() {
        let c = generate_synthetic(20, 6, 6, 8.0, 3).unwrap();
        assert!(c.documents().iter().all(|d| d.len() == 6));
    }

    #[test]
    fn synthetic_parameter_errors() {
        assert!(generate_synthetic(10, 3, 4, 1.0, 0).is_err());
        assert!(generate_synthetic(10, 3, 0, 1.0, 0).is_err());
        assert!(generate_synthetic(10, 3, 2, -1.0, 0).is_err());
    }

    #[test]
    fn zipf_head_dominates() {
        let table = ZipfTable::new(100, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hits = [0usize; 100];
        for _ in 0..20_000 {
            hits[table.sample(&mut rng)] += 1;
        }
        assert!(hits[0] > hits[1] && hits[1] > hits[10] && hits[10] > hits[99]);
    }

    #[test]
    fn lower_bound_shape() {
        let c = generate_lower_bound(6, 2).unwrap();
        assert_eq!((c.num_docs(), c.num_words(), c.max_doc_len()), (6, 6, 2));
        assert!(c.word_counts().iter().all(|&n| n == 2));
        let c = generate_lower_bound(4, 4).unwrap();
        assert_eq!(c.num_docs(), 4);
        assert!(c.documents().windows(2).all(|w| w[0].words() == w[1].words()));
        assert!(generate_lower_bound(5, 2).is_err());
        assert!(generate_lower_bound(4, 0).is_err());
    }

    #[test]
    fn planted_counts() {
        let c = generate_planted(&[PlantedPair::symmetric(10, 4)], Some((4, 2))).unwrap();
        assert_eq!(c.count(c.dictionary().get("p0x").unwrap()), 10);
        assert_eq!(c.count(c.dictionary().get("p0y").unwrap()), 10);
        assert_eq!(c.num_docs(), 4 + 6 + 6 + 4);
        assert_eq!(recount(&c), c.word_counts());
    }

    #[test]
    fn pairs_are_sorted() {
        let d = Document::new(0, vec![WordId(3), WordId(1), WordId(2), WordId(1)]);
        let pairs: Vec<_> = d.pairs().map(|p| (p.first().0, p.second().0)).collect();
        assert_eq!(pairs, vec![(1, 2), (1, 3), (2, 3)]);
        assert_eq!(d.pair_count(), 3);
        assert_eq!(WordPair::new(WordId(5), WordId(2)), WordPair::new(WordId(2), WordId(5)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_match_second_pass(lines in prop::collection::vec(prop::collection::vec(0u8..12, 0..6), 0..30)) {
                let text: String = lines
                    .iter()
                    .map(|l| l.iter().map(|t| format!("t{t}")).collect::<Vec<_>>().join(" "))
                    .collect::<Vec<_>>()
                    .join("\n");
                let c = read_corpus(text.as_bytes(), &LoadOptions::default()).unwrap();
                prop_assert_eq!(recount(&c), c.word_counts().to_vec());
                prop_assert!(c.word_counts().iter().all(|&n| n >= 1));
                let total: u64 = c.word_counts().iter().sum();
                prop_assert!(total <= (c.num_docs() * c.max_doc_len()) as u64);
            }
        }
    }
}
