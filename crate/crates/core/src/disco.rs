//! Sampled pair emission for Cosine, Dice and Overlap similarity, and the
//! naive all-pairs baseline, both run on the engine.
//!
//! A pair `(x, y)` is emitted from a document with probability
//! `q = (p/ε) · f(#(x), #(y))`, where `f` is the measure's denominator
//! inverted. Frequent words are emitted rarely, which is what makes the
//! shuffle size independent of the number of documents. The reducer sums the
//! emitted ones and scales by `ε/p`. When `q >= 1` every co-occurrence was
//! emitted, so the reducer divides by the exact denominator instead.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, Document, WordPair};
use crate::engine::{run_job, Combiner, Emitter, JobConfig, JobError, JobMetrics, MapperContext};
use crate::exact::{score_unchecked, MeasureKind, PairScore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscoError {
    #[error("oversampling parameter must be finite and > 0, got {0}")]
    InvalidOversample(f64),
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("{0} has no sampled emitter; use the minhash module for jaccard")]
    UnsupportedMeasure(MeasureKind),
    #[error("word {0} is missing from the background model")]
    UnknownWord(u32),
    #[error(transparent)]
    Job(#[from] JobError),
}

/// The oversampling knob `p/ε`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct OversampleParam(f64);

impl OversampleParam {
    pub fn new(p_over_eps: f64) -> Result<Self, DiscoError> {
        if p_over_eps.is_finite() && p_over_eps > 0.0 {
            Ok(OversampleParam(p_over_eps))
        } else {
            Err(DiscoError::InvalidOversample(p_over_eps))
        }
    }

    /// `p = 2 ln D` (union bound over all `D²` pairs) divided by the
    /// user threshold `ε`.
    pub fn from_threshold(epsilon: f64, dict_size: usize) -> Result<Self, DiscoError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(DiscoError::InvalidThreshold(epsilon));
        }
        let d = dict_size.max(2) as f64;
        Self::new(2.0 * d.ln() / epsilon)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_sampled(measure: MeasureKind) -> Result<(), DiscoError> {
    match measure {
        MeasureKind::Jaccard => Err(DiscoError::UnsupportedMeasure(measure)),
        _ => Ok(()),
    }
}

/// Raw emission probability; may exceed 1.
pub fn emit_probability(
    measure: MeasureKind,
    p_over_eps: OversampleParam,
    count_x: u64,
    count_y: u64,
) -> Result<f64, DiscoError> {
    check_sampled(measure)?;
    if count_x == 0 || count_y == 0 {
        return Err(DiscoError::UnknownWord(if count_x == 0 { 0 } else { 1 }));
    }
    Ok(probability_unchecked(measure, p_over_eps.0, count_x, count_y))
}

#[inline]
pub(crate) fn probability_unchecked(measure: MeasureKind, p: f64, count_x: u64, count_y: u64) -> f64 {
    let (x, y) = (count_x as f64, count_y as f64);
    match measure {
        MeasureKind::Cosine => p / (x * y).sqrt(),
        MeasureKind::Overlap => p / x.min(y),
        MeasureKind::Dice => p * 2.0 / (x + y),
        MeasureKind::Jaccard => unreachable!("jaccard has no sampled emitter"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitDecision {
    pub probability: f64,
    pub emitted: bool,
}

impl EmitDecision {
    /// One uniform draw per decision, also when the outcome is certain, so
    /// the coin stream stays aligned across parameter settings.
    #[inline]
    pub fn flip<R: Rng + ?Sized>(probability: f64, rng: &mut R) -> Self {
        let u: f64 = rng.gen();
        EmitDecision { probability, emitted: probability >= 1.0 || u < probability }
    }
}

/// Emits `(pair -> 1)` for every pair of the document.
pub fn naive_mapper(doc: &Document, _ctx: &mut MapperContext<'_>, out: &mut Emitter<WordPair, u32>) -> Result<(), String> {
    for pair in doc.pairs() {
        out.emit(pair, 1);
    }
    Ok(())
}

/// One coin per pair, in sorted pair order.
pub fn disco_mapper(
    doc: &Document,
    ctx: &mut MapperContext<'_>,
    measure: MeasureKind,
    p_over_eps: OversampleParam,
    out: &mut Emitter<WordPair, u32>,
) -> Result<(), String> {
    check_sampled(measure).map_err(|e| e.to_string())?;
    let background = ctx.background;
    for pair in doc.pairs() {
        let cx = background[pair.first().index()];
        let cy = background[pair.second().index()];
        let q = probability_unchecked(measure, p_over_eps.0, cx, cy);
        if EmitDecision::flip(q, &mut ctx.rng).emitted {
            out.emit(pair, 1);
        }
    }
    Ok(())
}

pub fn disco_reducer(
    pair: WordPair,
    values: &[u32],
    measure: MeasureKind,
    p_over_eps: OversampleParam,
    background: &[u64],
) -> Result<f64, DiscoError> {
    let lookup = |w: crate::corpus::WordId| match background.get(w.index()) {
        Some(&n) if n > 0 => Ok(n),
        _ => Err(DiscoError::UnknownWord(w.0)),
    };
    let (cx, cy) = (lookup(pair.first())?, lookup(pair.second())?);
    let a: u64 = values.iter().map(|&v| v as u64).sum();
    let q = emit_probability(measure, p_over_eps, cx, cy)?;
    if q >= 1.0 {
        Ok(score_unchecked(measure, a, cx, cy))
    } else {
        Ok(a as f64 / p_over_eps.0)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Scores ordered by pair.
    pub scores: Vec<PairScore>,
    pub metrics: JobMetrics,
}

impl PipelineOutput {
    pub fn get(&self, pair: WordPair) -> Option<f64> {
        self.scores.binary_search_by(|s| s.pair.cmp(&pair)).ok().map(|i| self.scores[i].score)
    }

    /// Estimate for `pair`, zero when it was never emitted.
    pub fn estimate(&self, pair: WordPair) -> f64 {
        self.get(pair).unwrap_or(0.0)
    }
}

/// Exact all-pairs scores via pair emission and a sum reducer.
pub fn naive_pipeline(corpus: &Corpus, measure: MeasureKind, job: &JobConfig) -> Result<PipelineOutput, DiscoError> {
    let background = corpus.word_counts();
    let reducer = |pair: &WordPair, values: &[u32]| -> Result<f64, String> {
        let a: u64 = values.iter().map(|&v| v as u64).sum();
        Ok(score_unchecked(measure, a, background[pair.first().index()], background[pair.second().index()]))
    };
    let out = run_job(corpus, naive_mapper, reducer, None, job)?;
    Ok(PipelineOutput { scores: to_scores(out.results), metrics: out.metrics })
}

#[derive(Debug, Clone, Copy)]
pub struct DiscoOptions {
    pub job: JobConfig,
    /// Merge ones per map task before shuffling.
    pub combine: bool,
    /// Clamp estimates into `[0, 1]`. Off by default: raw estimates are unbiased.
    pub clamp: bool,
}

impl DiscoOptions {
    pub fn new(seed: u64) -> Self {
        DiscoOptions { job: JobConfig::new(seed), combine: false, clamp: false }
    }
}

pub fn disco_pipeline(
    corpus: &Corpus,
    measure: MeasureKind,
    p_over_eps: OversampleParam,
    options: &DiscoOptions,
) -> Result<PipelineOutput, DiscoError> {
    check_sampled(measure)?;
    let background = corpus.word_counts();
    let mapper = |doc: &Document, ctx: &mut MapperContext<'_>, out: &mut Emitter<WordPair, u32>| {
        disco_mapper(doc, ctx, measure, p_over_eps, out)
    };
    let reducer = |pair: &WordPair, values: &[u32]| -> Result<f64, String> {
        let est = disco_reducer(*pair, values, measure, p_over_eps, background).map_err(|e| e.to_string())?;
        Ok(if options.clamp { est.clamp(0.0, 1.0) } else { est })
    };
    let sum = |a: &u32, b: &u32| a + b;
    let combiner: Option<Combiner<'_, u32>> = if options.combine { Some(&sum) } else { None };
    let out = run_job(corpus, mapper, reducer, combiner, &options.job)?;
    Ok(PipelineOutput { scores: to_scores(out.results), metrics: out.metrics })
}

fn to_scores(results: Vec<(WordPair, f64)>) -> Vec<PairScore> {
    results.into_iter().map(|(pair, score)| PairScore { pair, score }).collect()
}

/// Scores for exactly `pairs`, with zero for every pair missing from
/// `estimates`.
pub fn materialize_zeros(estimates: &PipelineOutput, pairs: &[WordPair]) -> Vec<PairScore> {
    pairs.iter().map(|&pair| PairScore { pair, score: estimates.estimate(pair) }).collect()
}
