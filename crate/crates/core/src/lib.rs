//! Dimension independent all-pairs similarity.
//!
//! Pairwise Cosine, Dice and Overlap scores are estimated by emitting word
//! pairs with probabilities that shrink as the words get more frequent, which
//! makes the shuffle size depend on the dictionary size and the document
//! length but not on the number of documents. Jaccard is estimated with
//! MinHash, again with a map-side filter that bounds the shuffle. Everything
//! runs on a small in-process map-shuffle-reduce engine that counts the
//! emissions a distributed run would shuffle.
//!
//! Modules:
//! - [`corpus`]: documents, dictionary, per-word counts, generators
//! - [`engine`]: the map-shuffle-reduce executor and its metrics
//! - [`exact`]: exact measures and the brute-force oracle
//! - [`disco`]: sampled emitters and reducers, naive baseline
//! - [`minhash`]: full and sampled MinHash
//! - [`streamsim`]: the streaming variant
//! - [`experiment`]: shuffle versus accuracy sweeps

pub mod corpus;
pub mod disco;
pub mod engine;
pub mod exact;
pub mod experiment;
pub mod minhash;
pub mod streamsim;

pub use corpus::{Corpus, Document, WordId, WordPair};
pub use disco::{disco_pipeline, naive_pipeline, DiscoOptions, OversampleParam};
pub use engine::{JobConfig, JobMetrics, Parallelism};
pub use exact::{oracle_all_pairs, MeasureKind, PairScore};
