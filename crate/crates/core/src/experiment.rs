//! Accuracy versus shuffle-size sweeps over the oversampling parameter.

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, WordPair};
use crate::disco::{disco_pipeline, DiscoError, DiscoOptions, OversampleParam};
use crate::engine::Parallelism;
use crate::exact::{cooccurrence, score_unchecked, MeasureKind, PairScore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Disco(#[from] DiscoError),
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub measure: MeasureKind,
    pub p_over_eps: Vec<f64>,
    /// Grid for the error-above-threshold curve.
    pub thresholds: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Relative error level counted in `frac_rel_error_above_delta`.
    pub delta: f64,
    pub parallelism: Parallelism,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.measure == MeasureKind::Jaccard {
            return bad("jaccard has no sampled pair emitter; use the minhash subcommand");
        }
        if self.p_over_eps.is_empty() {
            return bad("p_over_eps sweep is empty");
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        if self.thresholds.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return bad("thresholds must lie in (0, 1]");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        for &v in &self.p_over_eps {
            OversampleParam::new(v)?;
        }
        Ok(())
    }
}

/// Exact scores of every co-occurring pair, ordered by pair.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub measure: MeasureKind,
    pub scores: Vec<PairScore>,
}

impl GroundTruth {
    pub fn compute(corpus: &Corpus, measure: MeasureKind) -> Self {
        let mut scores: Vec<PairScore> = cooccurrence(corpus)
            .into_iter()
            .map(|(pair, xy)| PairScore {
                pair,
                score: score_unchecked(measure, xy, corpus.count(pair.first()), corpus.count(pair.second())),
            })
            .collect();
        scores.sort_unstable_by_key(|s| s.pair);
        GroundTruth { measure, scores }
    }

    pub fn get(&self, pair: WordPair) -> Option<f64> {
        self.scores.binary_search_by(|s| s.pair.cmp(&pair)).ok().map(|i| self.scores[i].score)
    }
}

/// Per-pair relative errors of one run against the truth, truth > 0 only.
/// `estimates` must be ordered by pair; missing pairs count as 0.
pub fn relative_errors(truth: &GroundTruth, estimates: &[PairScore]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(truth.scores.len());
    let mut it = estimates.iter().peekable();
    for t in &truth.scores {
        while it.peek().is_some_and(|e| e.pair < t.pair) {
            it.next();
        }
        let est = match it.peek() {
            Some(e) if e.pair == t.pair => e.score,
            _ => 0.0,
        };
        if t.score > 0.0 {
            out.push((t.score, (est - t.score).abs() / t.score));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub p_over_eps: f64,
    pub seeds: usize,
    pub mean_shuffle_size: f64,
    pub naive_shuffle_size: u64,
    pub shuffle_ratio: f64,
    pub mean_rel_error: f64,
    pub frac_rel_error_above_delta: f64,
    pub mean_max_reduce_key: f64,
    /// Mean emissions per co-occurring pair (absent keys count as zero).
    pub mean_key_load: f64,
    /// `(ε, mean relative error over pairs with truth >= ε)`; `None` when
    /// no pair reaches `ε`.
    pub threshold_errors: Vec<(f64, Option<f64>)>,
}

pub fn run_sweep(corpus: &Corpus, config: &SweepConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    config.validate()?;
    let truth = GroundTruth::compute(corpus, config.measure);
    run_sweep_with_truth(corpus, &truth, config)
}

pub fn run_sweep_with_truth(
    corpus: &Corpus,
    truth: &GroundTruth,
    config: &SweepConfig,
) -> Result<Vec<SweepRow>, ExperimentError> {
    config.validate()?;
    let naive = corpus.naive_shuffle_size();
    let key_count = truth.scores.len().max(1) as f64;
    let mut rows = Vec::with_capacity(config.p_over_eps.len());
    for &pe in &config.p_over_eps {
        let param = OversampleParam::new(pe)?;
        let mut shuffle = 0.0;
        let mut max_key = 0.0;
        let mut rel_sum = 0.0;
        let mut above_delta = 0.0;
        let mut thr_sum = vec![0.0; config.thresholds.len()];
        let mut thr_n = vec![0usize; config.thresholds.len()];
        for &seed in &config.seeds {
            let mut opts = DiscoOptions::new(seed);
            opts.job = opts.job.with_parallelism(config.parallelism);
            let out = disco_pipeline(corpus, config.measure, param, &opts)?;
            shuffle += out.metrics.shuffle_size as f64;
            max_key += out.metrics.max_reduce_key as f64;
            let errs = relative_errors(truth, &out.scores);
            let n = errs.len().max(1) as f64;
            rel_sum += errs.iter().map(|e| e.1).sum::<f64>() / n;
            above_delta += errs.iter().filter(|e| e.1 > config.delta).count() as f64 / n;
            for (i, &eps) in config.thresholds.iter().enumerate() {
                let sel: Vec<f64> = errs.iter().filter(|e| e.0 >= eps).map(|e| e.1).collect();
                if !sel.is_empty() {
                    thr_sum[i] += sel.iter().sum::<f64>() / sel.len() as f64;
                    thr_n[i] += 1;
                }
            }
        }
        let r = config.seeds.len() as f64;
        let mean_shuffle = shuffle / r;
        rows.push(SweepRow {
            p_over_eps: pe,
            seeds: config.seeds.len(),
            mean_shuffle_size: mean_shuffle,
            naive_shuffle_size: naive,
            shuffle_ratio: if naive == 0 { 0.0 } else { mean_shuffle / naive as f64 },
            mean_rel_error: rel_sum / r,
            frac_rel_error_above_delta: above_delta / r,
            mean_max_reduce_key: max_key / r,
            mean_key_load: mean_shuffle / key_count,
            threshold_errors: config
                .thresholds
                .iter()
                .enumerate()
                .map(|(i, &eps)| (eps, (thr_n[i] > 0).then(|| thr_sum[i] / thr_n[i] as f64)))
                .collect(),
        });
    }
    Ok(rows)
}
