//! Exact similarity definitions and the brute-force all-pairs oracle.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, WordPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Cosine,
    Jaccard,
    Overlap,
    Dice,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 4] = [MeasureKind::Cosine, MeasureKind::Jaccard, MeasureKind::Overlap, MeasureKind::Dice];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Cosine => "cosine",
            MeasureKind::Jaccard => "jaccard",
            MeasureKind::Overlap => "overlap",
            MeasureKind::Dice => "dice",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown similarity measure `{0}` (expected cosine, jaccard, overlap or dice)")]
pub struct UnknownMeasure(pub String);

impl FromStr for MeasureKind {
    type Err = UnknownMeasure;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(MeasureKind::Cosine),
            "jaccard" | "jac" => Ok(MeasureKind::Jaccard),
            "overlap" => Ok(MeasureKind::Overlap),
            "dice" => Ok(MeasureKind::Dice),
            _ => Err(UnknownMeasure(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairScore {
    pub pair: WordPair,
    pub score: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("word count must be positive (got #(x)={count_x}, #(y)={count_y})")]
    ZeroCount { count_x: u64, count_y: u64 },
    #[error("co-occurrence {count_xy} exceeds min(#(x)={count_x}, #(y)={count_y})")]
    CooccurrenceTooLarge { count_xy: u64, count_x: u64, count_y: u64 },
}

/// `#(x, y)` for every pair that co-occurs at least once.
pub fn cooccurrence(corpus: &Corpus) -> HashMap<WordPair, u64> {
    let mut counts = HashMap::new();
    for doc in corpus.documents() {
        for pair in doc.pairs() {
            *counts.entry(pair).or_insert(0) += 1;
        }
    }
    counts
}

pub fn exact_score(measure: MeasureKind, count_xy: u64, count_x: u64, count_y: u64) -> Result<f64, ScoreError> {
    if count_x == 0 || count_y == 0 {
        return Err(ScoreError::ZeroCount { count_x, count_y });
    }
    if count_xy > count_x.min(count_y) {
        return Err(ScoreError::CooccurrenceTooLarge { count_xy, count_x, count_y });
    }
    Ok(score_unchecked(measure, count_xy, count_x, count_y))
}

/// Formula only; callers guarantee the preconditions of [`exact_score`].
#[inline]
pub(crate) fn score_unchecked(measure: MeasureKind, count_xy: u64, count_x: u64, count_y: u64) -> f64 {
    let (xy, x, y) = (count_xy as f64, count_x as f64, count_y as f64);
    match measure {
        MeasureKind::Cosine => xy / (x * y).sqrt(),
        MeasureKind::Jaccard => xy / (x + y - xy),
        MeasureKind::Overlap => xy / x.min(y),
        MeasureKind::Dice => 2.0 * xy / (x + y),
    }
}

/// Descending score, ties broken by pair.
pub fn sort_scores(scores: &mut [PairScore]) {
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.pair.cmp(&b.pair)));
}

/// Exact scores for all co-occurring pairs with `score >= threshold`.
pub fn oracle_all_pairs(corpus: &Corpus, measure: MeasureKind, threshold: f64) -> Vec<PairScore> {
    let counts = cooccurrence(corpus);
    scores_from_counts(corpus, &counts, measure, threshold)
}

/// Same as [`oracle_all_pairs`] with precomputed co-occurrence counts.
pub fn scores_from_counts(
    corpus: &Corpus,
    counts: &HashMap<WordPair, u64>,
    measure: MeasureKind,
    threshold: f64,
) -> Vec<PairScore> {
    let mut out: Vec<PairScore> = counts
        .iter()
        .map(|(&pair, &xy)| PairScore {
            pair,
            score: score_unchecked(measure, xy, corpus.count(pair.first()), corpus.count(pair.second())),
        })
        .filter(|s| s.score >= threshold)
        .collect();
    sort_scores(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_lower_bound, generate_synthetic, read_corpus, LoadOptions};
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    fn small() -> Corpus {
        read_corpus("a b\na b\na c".as_bytes(), &LoadOptions::default()).unwrap()
    }

    fn pair(c: &Corpus, x: &str, y: &str) -> WordPair {
        WordPair::new(c.dictionary().get(x).unwrap(), c.dictionary().get(y).unwrap())
    }

    #[test]
    fn cooccurrence_small() {
        let c = small();
        let m = cooccurrence(&c);
        assert_eq!(m.len(), 2);
        assert_eq!(m[&pair(&c, "a", "b")], 2);
        assert_eq!(m[&pair(&c, "a", "c")], 1);
    }

    #[test]
    fn cooccurrence_single_word_doc() {
        let c = read_corpus("a".as_bytes(), &LoadOptions::default()).unwrap();
        assert!(cooccurrence(&c).is_empty());
    }

    #[test]
    fn cooccurrence_lower_bound() {
        let c = generate_lower_bound(4, 2).unwrap();
        let m = cooccurrence(&c);
        assert_eq!(m.len(), 2);
        assert!(m.values().all(|&n| n == 2));
    }

    #[test]
    fn formulas() {
        let cos = exact_score(MeasureKind::Cosine, 2, 3, 2).unwrap();
        assert!((cos - 2.0 / 6f64.sqrt()).abs() < TOL);
        assert!((cos - 0.816497).abs() < 1e-6);
        assert!((exact_score(MeasureKind::Jaccard, 2, 3, 2).unwrap() - 2.0 / 3.0).abs() < TOL);
        assert!((exact_score(MeasureKind::Overlap, 2, 3, 2).unwrap() - 1.0).abs() < TOL);
        assert!((exact_score(MeasureKind::Dice, 2, 3, 2).unwrap() - 0.8).abs() < TOL);
        for m in MeasureKind::ALL {
            assert_eq!(exact_score(m, 7, 7, 7).unwrap(), 1.0);
            assert_eq!(exact_score(m, 0, 4, 9).unwrap(), 0.0);
        }
    }

    #[test]
    fn precondition_errors() {
        assert!(matches!(exact_score(MeasureKind::Cosine, 0, 0, 1), Err(ScoreError::ZeroCount { .. })));
        assert!(matches!(
            exact_score(MeasureKind::Dice, 3, 2, 5),
            Err(ScoreError::CooccurrenceTooLarge { .. })
        ));
    }

    #[test]
    fn oracle_small() {
        let c = small();
        let all = oracle_all_pairs(&c, MeasureKind::Cosine, 0.0);
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].pair, pair(&c, "a", "b"));
        assert!((all[0].score - 0.816497).abs() < 1e-6);
        assert_eq!(all[1].pair, pair(&c, "a", "c"));
        assert!((all[1].score - 1.0 / 3f64.sqrt()).abs() < TOL);
        assert!((all[1].score - 0.577350).abs() < 1e-6);
        assert!(oracle_all_pairs(&c, MeasureKind::Cosine, 0.9).is_empty());
    }

    #[test]
    fn oracle_lower_bound_all_ones() {
        let c = generate_lower_bound(6, 2).unwrap();
        for m in MeasureKind::ALL {
            let all = oracle_all_pairs(&c, m, 1.0);
            assert_eq!(all.len(), 3);
            assert!(all.iter().all(|s| s.score == 1.0));
        }
    }

    #[test]
    fn parse_measure() {
        assert_eq!("Cosine".parse::<MeasureKind>().unwrap(), MeasureKind::Cosine);
        assert_eq!("dice".parse::<MeasureKind>().unwrap(), MeasureKind::Dice);
        assert!("euclid".parse::<MeasureKind>().is_err());
        for m in MeasureKind::ALL {
            assert_eq!(m.name().parse::<MeasureKind>().unwrap(), m);
        }
    }

    proptest! {
        #[test]
        fn measure_ordering(x in 1u64..500, y in 1u64..500, frac in 0.0f64..=1.0) {
            let xy = ((x.min(y) as f64) * frac).floor() as u64;
            let cos = exact_score(MeasureKind::Cosine, xy, x, y).unwrap();
            let jac = exact_score(MeasureKind::Jaccard, xy, x, y).unwrap();
            let ovl = exact_score(MeasureKind::Overlap, xy, x, y).unwrap();
            let dice = exact_score(MeasureKind::Dice, xy, x, y).unwrap();
            prop_assert!(ovl + TOL >= cos);
            prop_assert!(cos + TOL >= dice);
            prop_assert!(dice + TOL >= jac);
            for s in [cos, jac, ovl, dice] {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }

        #[test]
        fn ordering_on_random_corpora(seed in 0u64..1000) {
            let c = generate_synthetic(300, 40, 4, 1.0, seed).unwrap();
            let counts = cooccurrence(&c);
            for (&p, &xy) in &counts {
                let (x, y) = (c.count(p.first()), c.count(p.second()));
                let cos = exact_score(MeasureKind::Cosine, xy, x, y).unwrap();
                let jac = exact_score(MeasureKind::Jaccard, xy, x, y).unwrap();
                let ovl = exact_score(MeasureKind::Overlap, xy, x, y).unwrap();
                let dice = exact_score(MeasureKind::Dice, xy, x, y).unwrap();
                prop_assert!(ovl + TOL >= cos && cos + TOL >= dice && dice + TOL >= jac);
            }
        }
    }
}
