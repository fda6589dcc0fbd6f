//! Single-machine streaming similarity.
//!
//! Documents arrive one at a time. Word counters are exact; a co-occurrence
//! of `(x, y)` is kept with probability `q` computed from the counters at
//! that moment, and the kept record remembers `q`. Counters only grow, so a
//! record admitted earlier was admitted with a larger probability than the
//! current target `t`. A query keeps each record with probability `t / q_i`,
//! which gives every past co-occurrence the same overall survival
//! probability `t`, and then applies the batch estimator.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Document, WordId, WordPair};
use crate::disco::{probability_unchecked, DiscoError, OversampleParam};
use crate::engine::derive_seed;
use crate::exact::{score_unchecked, MeasureKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("word {0} has not been seen in the stream")]
    UnseenWord(u32),
    #[error(transparent)]
    Disco(#[from] DiscoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    measure: MeasureKind,
    p_over_eps: OversampleParam,
    word_count: Vec<u64>,
    seen_words: usize,
    docs_seen: u64,
    bags: HashMap<WordPair, Vec<f64>>,
    rng: ChaCha8Rng,
}

impl StreamState {
    /// Cosine streaming state.
    pub fn new(p_over_eps: OversampleParam, seed: u64) -> Self {
        Self::with_measure(MeasureKind::Cosine, p_over_eps, seed).expect("cosine is supported")
    }

    /// Dice and Overlap reuse the same machinery with their own emission
    /// probability.
    pub fn with_measure(measure: MeasureKind, p_over_eps: OversampleParam, seed: u64) -> Result<Self, StreamError> {
        if measure == MeasureKind::Jaccard {
            return Err(DiscoError::UnsupportedMeasure(measure).into());
        }
        Ok(StreamState {
            measure,
            p_over_eps,
            word_count: Vec::new(),
            seen_words: 0,
            docs_seen: 0,
            bags: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn measure(&self) -> MeasureKind {
        self.measure
    }

    pub fn count(&self, w: WordId) -> u64 {
        self.word_count.get(w.index()).copied().unwrap_or(0)
    }

    /// Running `#(w)`, indexed by `WordId`; zero for ids not yet seen.
    pub fn word_counts(&self) -> &[u64] {
        &self.word_count
    }

    pub fn docs_seen(&self) -> u64 {
        self.docs_seen
    }

    pub fn words_seen(&self) -> usize {
        self.seen_words
    }

    /// Stored admission probabilities for a pair, oldest first.
    pub fn bag(&self, x: WordId, y: WordId) -> &[f64] {
        self.bags.get(&WordPair::new(x, y)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn bags(&self) -> impl Iterator<Item = (&WordPair, &Vec<f64>)> {
        self.bags.iter()
    }

    fn probability(&self, cx: u64, cy: u64) -> f64 {
        probability_unchecked(self.measure, self.p_over_eps.value(), cx, cy)
    }

    /// Counters first, then one coin per pair in sorted pair order.
    pub fn update(&mut self, doc: &Document) {
        self.docs_seen += 1;
        for &w in doc.words() {
            if w.index() >= self.word_count.len() {
                self.word_count.resize(w.index() + 1, 0);
            }
            if self.word_count[w.index()] == 0 {
                self.seen_words += 1;
            }
            self.word_count[w.index()] += 1;
        }
        for pair in doc.pairs() {
            let q = self
                .probability(self.word_count[pair.first().index()], self.word_count[pair.second().index()])
                .min(1.0);
            let u: f64 = self.rng.gen();
            if q >= 1.0 || u < q {
                self.bags.entry(pair).or_default().push(q);
            }
        }
    }

    /// Estimate over everything seen so far. Does not modify the state;
    /// subsampling draws from `rng`.
    pub fn query<R: Rng + ?Sized>(&self, x: WordId, y: WordId, rng: &mut R) -> Result<f64, StreamError> {
        let (cx, cy) = (self.count(x), self.count(y));
        if cx == 0 {
            return Err(StreamError::UnseenWord(x.0));
        }
        if cy == 0 {
            return Err(StreamError::UnseenWord(y.0));
        }
        if x == y {
            return Ok(1.0);
        }
        let bag = self.bag(x, y);
        let target = self.probability(cx, cy);
        if target >= 1.0 {
            // Every admission probability was >= target >= 1: the bag holds
            // every co-occurrence.
            return Ok(score_unchecked(self.measure, bag.len() as u64, cx, cy));
        }
        let survivors = bag.iter().filter(|&&qi| rng.gen::<f64>() < target / qi).count();
        Ok(survivors as f64 / self.p_over_eps.value())
    }

    /// Query with a private RNG seeded from `seed`.
    pub fn query_seeded(&self, x: WordId, y: WordId, seed: u64) -> Result<f64, StreamError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5157_5245));
        self.query(x, y, &mut rng)
    }

    /// Stored records plus one counter per distinct word seen.
    pub fn memory(&self) -> u64 {
        self.bags.values().map(|b| b.len() as u64).sum::<u64>() + self.seen_words as u64
    }
}

/// Memory envelope `(p/ε) · L · D · (⌊lg N⌋ + 1)`.
pub fn memory_envelope(p_over_eps: OversampleParam, max_doc_len: usize, words_seen: usize, docs: u64) -> f64 {
    let lg = if docs == 0 { 0 } else { 63 - docs.leading_zeros() as u64 };
    p_over_eps.value() * max_doc_len as f64 * words_seen as f64 * (lg + 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_corpus, Corpus, LoadOptions};
    use crate::exact::oracle_all_pairs;

    fn small() -> Corpus {
        read_corpus("a b\na b\na c".as_bytes(), &LoadOptions::default()).unwrap()
    }

    fn p(v: f64) -> OversampleParam {
        OversampleParam::new(v).unwrap()
    }

    fn stream(c: &Corpus, pe: f64, seed: u64) -> StreamState {
        let mut s = StreamState::new(p(pe), seed);
        for d in c.documents() {
            s.update(d);
        }
        s
    }

    #[test]
    fn first_document() {
        let c = read_corpus("a b".as_bytes(), &LoadOptions::default()).unwrap();
        let mut admitted = 0;
        for seed in 0..2000 {
            let s = stream(&c, 0.5, seed);
            assert_eq!(s.word_counts(), &[1, 1]);
            let bag = s.bag(WordId(0), WordId(1));
            assert!(bag.is_empty() || bag == [0.5]);
            admitted += bag.len();
        }
        // Binomial(2000, 0.5): σ ≈ 22.4.
        assert!((admitted as f64 - 1000.0).abs() < 3.0 * 22.4);
    }

    #[test]
    fn certain_inserts_clamp_to_one() {
        let s = stream(&small(), 1e6, 0);
        for (_, bag) in s.bags() {
            assert!(bag.iter().all(|&q| q == 1.0));
        }
        assert_eq!(s.memory(), 6);
    }

    #[test]
    fn counters_match_batch() {
        let c = small();
        let s = stream(&c, 0.5, 3);
        assert_eq!(s.word_counts(), c.word_counts());
        assert_eq!(s.words_seen(), 3);
        assert_eq!(s.docs_seen(), 3);
    }

    #[test]
    fn deterministic_regime_is_exact() {
        let c = small();
        let s = stream(&c, 1e6, 0);
        let (a, b) = (c.dictionary().get("a").unwrap(), c.dictionary().get("b").unwrap());
        let est = s.query_seeded(a, b, 1).unwrap();
        assert_eq!(est, oracle_all_pairs(&c, MeasureKind::Cosine, 0.0)[0].score);
        assert!((est - 0.816497).abs() < 1e-6);
    }

    #[test]
    fn self_and_unseen_queries() {
        let c = small();
        let s = stream(&c, 0.5, 0);
        assert_eq!(s.query_seeded(WordId(0), WordId(0), 0).unwrap(), 1.0);
        assert_eq!(s.query_seeded(WordId(0), WordId(7), 0), Err(StreamError::UnseenWord(7)));
        let fresh = StreamState::new(p(1.0), 0);
        assert_eq!(fresh.memory(), 0);
        assert!(fresh.query_seeded(WordId(0), WordId(1), 0).is_err());
    }

    #[test]
    fn query_is_non_destructive() {
        let c = small();
        let s = stream(&c, 0.5, 11);
        let before = s.clone();
        let a = s.query_seeded(WordId(0), WordId(1), 99).unwrap();
        let b = s.query_seeded(WordId(0), WordId(1), 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(s, before);
    }

    #[test]
    fn stored_probabilities_are_non_increasing() {
        let c = crate::corpus::generate_synthetic(3000, 60, 6, 1.0, 4).unwrap();
        let s = stream(&c, 3.0, 2);
        for (_, bag) in s.bags() {
            assert!(bag.windows(2).all(|w| w[0] >= w[1]));
            assert!(bag.iter().all(|&q| q > 0.0 && q <= 1.0));
        }
    }

    #[test]
    fn dice_and_overlap_variants() {
        let c = small();
        for m in [MeasureKind::Dice, MeasureKind::Overlap] {
            let mut s = StreamState::with_measure(m, p(1e6), 0).unwrap();
            for d in c.documents() {
                s.update(d);
            }
            let est = s.query_seeded(WordId(0), WordId(1), 0).unwrap();
            assert_eq!(est, score_unchecked(m, 2, 3, 2));
        }
        assert!(StreamState::with_measure(MeasureKind::Jaccard, p(1.0), 0).is_err());
    }

    #[test]
    fn envelope_arithmetic() {
        assert_eq!(memory_envelope(p(2.0), 3, 10, 1), 60.0);
        assert_eq!(memory_envelope(p(2.0), 3, 10, 8), 240.0);
        assert_eq!(memory_envelope(p(2.0), 3, 10, 15), 240.0);
    }
}
