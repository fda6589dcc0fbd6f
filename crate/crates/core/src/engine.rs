//! In-process map-shuffle-reduce executor.
//!
//! The engine runs a mapper over every document, groups emissions by key and
//! folds each group with a reducer. It does not move data anywhere; it
//! counts what a distributed run would have to shuffle.
//!
//! Determinism: each document gets its own RNG seeded from
//! `derive_seed(job_seed, doc_id)`, map tasks are fixed-size runs of
//! consecutive documents, and task outputs are merged in task order. Results
//! therefore do not depend on the number of worker threads.

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, Document};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const DOC_OFFSET: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 finalizer (Stafford variant 13). A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-document seed. For a fixed `job_seed` this is injective in `doc_id`:
/// every step is a bijection on `u64`.
#[inline]
pub fn derive_seed(job_seed: u64, doc_id: u64) -> u64 {
    let job = mix64(job_seed.wrapping_add(GOLDEN_GAMMA));
    mix64(job ^ mix64(doc_id.wrapping_mul(GOLDEN_GAMMA).wrapping_add(DOC_OFFSET)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Worker threads for map and reduce; `0` uses the global rayon pool.
    Threads(usize),
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism::Threads(0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JobConfig {
    pub seed: u64,
    pub parallelism: Parallelism,
    /// Documents per map task. A combiner merges values within one task.
    pub task_size: usize,
}

impl JobConfig {
    pub fn new(seed: u64) -> Self {
        JobConfig { seed, parallelism: Parallelism::default(), task_size: 1024 }
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn with_task_size(mut self, task_size: usize) -> Self {
        self.task_size = task_size.max(1);
        self
    }
}

/// What a mapper sees besides its document.
pub struct MapperContext<'a> {
    pub doc_id: u32,
    /// Coin-flip stream for this document.
    pub rng: ChaCha8Rng,
    /// `#(w)` for every word, indexed by `WordId`.
    pub background: &'a [u64],
}

/// Collects a mapper's emissions.
pub struct Emitter<K, V> {
    buf: Vec<(K, V)>,
}

impl<K, V> Emitter<K, V> {
    #[inline]
    pub fn emit(&mut self, key: K, value: V) {
        self.buf.push((key, value));
    }
}

/// Associative, commutative merge of two values under the same key.
pub type Combiner<'a, V> = &'a (dyn Fn(&V, &V) -> V + Sync);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct JobMetrics {
    /// Emissions out of the map phase, counted before any combining.
    pub shuffle_size: u64,
    /// Values shipped after per-task combining, when a combiner ran.
    pub combined_shuffle_size: Option<u64>,
    pub max_reduce_key: u64,
    pub num_keys: u64,
    /// Pre-combiner value count per key, aligned with `JobOutput::results`.
    #[serde(skip)]
    pub key_histogram: Vec<u64>,
}

impl JobMetrics {
    pub fn mean_reduce_key(&self) -> f64 {
        if self.num_keys == 0 {
            0.0
        } else {
            self.shuffle_size as f64 / self.num_keys as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct JobOutput<K, O> {
    /// Reduced values sorted by key.
    pub results: Vec<(K, O)>,
    pub metrics: JobMetrics,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JobError {
    #[error("mapper failed on document {doc_id}: {message}")]
    Map { doc_id: u32, message: String },
    #[error("reducer failed on key {key}: {message}")]
    Reduce { key: String, message: String },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

struct Group<V> {
    values: Vec<V>,
    raw: u64,
}

type TaskOutput<K, V> = Vec<(K, V, u64)>;

/// Runs one job. `reducer` must be a pure function of the key and the
/// multiset of values; `combiner`, when given, must be associative and
/// commutative and agree with the reducer's fold.
pub fn run_job<K, V, O, M, R>(
    corpus: &Corpus,
    mapper: M,
    reducer: R,
    combiner: Option<Combiner<'_, V>>,
    config: &JobConfig,
) -> Result<JobOutput<K, O>, JobError>
where
    K: Ord + Hash + Clone + Debug + Send + Sync,
    V: Clone + Send + Sync,
    O: Send,
    M: Fn(&Document, &mut MapperContext<'_>, &mut Emitter<K, V>) -> Result<(), String> + Sync,
    R: Fn(&K, &[V]) -> Result<O, String> + Sync,
{
    match config.parallelism {
        Parallelism::Threads(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| JobError::Pool(e.to_string()))?;
            pool.install(|| execute(corpus, &mapper, &reducer, combiner, config, true))
        }
        Parallelism::Threads(_) => execute(corpus, &mapper, &reducer, combiner, config, true),
        Parallelism::Sequential => execute(corpus, &mapper, &reducer, combiner, config, false),
    }
}

fn execute<K, V, O, M, R>(
    corpus: &Corpus,
    mapper: &M,
    reducer: &R,
    combiner: Option<Combiner<'_, V>>,
    config: &JobConfig,
    parallel: bool,
) -> Result<JobOutput<K, O>, JobError>
where
    K: Ord + Hash + Clone + Debug + Send + Sync,
    V: Clone + Send + Sync,
    O: Send,
    M: Fn(&Document, &mut MapperContext<'_>, &mut Emitter<K, V>) -> Result<(), String> + Sync,
    R: Fn(&K, &[V]) -> Result<O, String> + Sync,
{
    let background = corpus.word_counts();
    let task_size = config.task_size.max(1);
    let run_task = |docs: &[Document]| -> Result<TaskOutput<K, V>, JobError> {
        let mut emitter = Emitter { buf: Vec::new() };
        for doc in docs {
            let mut ctx = MapperContext {
                doc_id: doc.doc_id,
                rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, doc.doc_id as u64)),
                background,
            };
            mapper(doc, &mut ctx, &mut emitter)
                .map_err(|message| JobError::Map { doc_id: doc.doc_id, message })?;
        }
        Ok(match combiner {
            Some(combine) => combine_task(emitter.buf, combine),
            None => emitter.buf.into_iter().map(|(k, v)| (k, v, 1)).collect(),
        })
    };

    let chunks: Vec<&[Document]> = corpus.documents().chunks(task_size).collect();
    let task_outputs: Vec<TaskOutput<K, V>> = if parallel {
        chunks.par_iter().map(|c| run_task(c)).collect::<Result<_, _>>()?
    } else {
        chunks.iter().map(|c| run_task(c)).collect::<Result<_, _>>()?
    };

    let mut shuffle_size = 0u64;
    let mut shipped = 0u64;
    let mut groups: HashMap<K, Group<V>> = HashMap::new();
    for out in task_outputs {
        for (key, value, raw) in out {
            shuffle_size += raw;
            shipped += 1;
            let group = groups.entry(key).or_insert_with(|| Group { values: Vec::new(), raw: 0 });
            group.values.push(value);
            group.raw += raw;
        }
    }
    let mut grouped: Vec<(K, Group<V>)> = groups.into_iter().collect();
    grouped.sort_unstable_by(|a, b| a.0.cmp(&b.0));

    let reduce_one = |(key, group): &(K, Group<V>)| -> Result<O, JobError> {
        reducer(key, &group.values).map_err(|message| JobError::Reduce { key: format!("{key:?}"), message })
    };
    let reduced: Vec<O> = if parallel {
        grouped.par_iter().map(reduce_one).collect::<Result<_, _>>()?
    } else {
        grouped.iter().map(reduce_one).collect::<Result<_, _>>()?
    };

    let key_histogram: Vec<u64> = grouped.iter().map(|(_, g)| g.raw).collect();
    let metrics = JobMetrics {
        shuffle_size,
        combined_shuffle_size: combiner.map(|_| shipped),
        max_reduce_key: key_histogram.iter().copied().max().unwrap_or(0),
        num_keys: key_histogram.len() as u64,
        key_histogram,
    };
    let results = grouped.into_iter().map(|(k, _)| k).zip(reduced).collect();
    Ok(JobOutput { results, metrics })
}

fn combine_task<K, V>(emissions: Vec<(K, V)>, combine: &(dyn Fn(&V, &V) -> V + Sync)) -> TaskOutput<K, V>
where
    K: Ord + Hash + Clone,
{
    let mut acc: HashMap<K, (V, u64)> = HashMap::new();
    for (key, value) in emissions {
        match acc.get_mut(&key) {
            Some((v, n)) => {
                *v = combine(v, &value);
                *n += 1;
            }
            None => {
                acc.insert(key, (value, 1));
            }
        }
    }
    let mut out: TaskOutput<K, V> = acc.into_iter().map(|(k, (v, n))| (k, v, n)).collect();
    out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn sum_combiner(a: &u64, b: &u64) -> u64 {
    a + b
}
