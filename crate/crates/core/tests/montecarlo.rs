//! Seed-averaged checks against closed-form expectations.

mod common;

use common::{brute_scores, id};
use disco::corpus::{generate_planted, generate_synthetic, Corpus, PlantedPair};
use disco::minhash::{jaccard_estimate, minhash_full, minhash_sampled, HashFamily, MinHashOptions};
use disco::streamsim::StreamState;
use disco::{disco_pipeline, DiscoOptions, MeasureKind, OversampleParam, WordPair};

fn p(v: f64) -> OversampleParam {
    OversampleParam::new(v).unwrap()
}

fn planted(count: u64, both: u64) -> Corpus {
    generate_planted(&[PlantedPair::symmetric(count, both)], None).unwrap()
}

fn pair(c: &Corpus) -> WordPair {
    WordPair::new(id(c, "p0x"), id(c, "p0y"))
}

#[test]
fn emission_count_is_binomial() {
    // #x = #y = 40, q = 8/40 = 0.2, 20 co-occurrences.
    let c = planted(40, 20);
    let runs = 3000u64;
    let mut total = 0u64;
    for seed in 0..runs {
        let out = disco_pipeline(&c, MeasureKind::Cosine, p(8.0), &DiscoOptions::new(seed)).unwrap();
        total += out.metrics.shuffle_size;
    }
    let mean = total as f64 / runs as f64;
    let sd = (20.0 * 0.2 * 0.8 / runs as f64).sqrt();
    assert!((mean - 4.0).abs() < 4.0 * sd, "mean emissions {mean}");
}

#[test]
fn sampled_measures_are_unbiased() {
    let c = planted(60, 30);
    let target = pair(&c);
    for (m, pe) in [(MeasureKind::Cosine, 12.0), (MeasureKind::Dice, 12.0), (MeasureKind::Overlap, 15.0)] {
        let truth = brute_scores(&c, m)[&(target.first().0, target.second().0)];
        let runs = 2000;
        let mut sum = 0.0;
        for seed in 0..runs {
            sum += disco_pipeline(&c, m, p(pe), &DiscoOptions::new(seed)).unwrap().estimate(target);
        }
        let mean = sum / runs as f64;
        // Var of a single estimate is s(1 - q)/(p/ε) <= s/(p/ε).
        let sd = (truth / pe / runs as f64).sqrt();
        assert!((mean - truth).abs() < 4.0 * sd, "{m}: mean {mean} truth {truth}");
    }
}

#[test]
fn streaming_matches_batch_when_saturated() {
    let c = generate_synthetic(400, 40, 5, 1.0, 6).unwrap();
    let mut s = StreamState::new(p(1e9), 1);
    let mut prefix = Vec::new();
    for (i, d) in c.documents().iter().enumerate() {
        s.update(d);
        prefix.push(d.words().iter().map(|&w| c.token(w)).collect::<Vec<_>>());
        if i % 97 == 0 || i + 1 == c.num_docs() {
            let mut b = disco::corpus::CorpusBuilder::with_dictionary(c.dictionary().clone());
            for doc in &prefix {
                b.push_tokens(doc.iter().copied());
            }
            let batch = b.finish();
            for ((x, y), want) in brute_scores(&batch, MeasureKind::Cosine) {
                let got = s.query_seeded(disco::WordId(x), disco::WordId(y), 0).unwrap();
                assert!((got - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn streaming_estimate_is_unbiased() {
    // Interleave so that admission probabilities vary along the stream.
    let c = planted(50, 25);
    let mut order: Vec<usize> = (0..c.num_docs()).collect();
    order.sort_by_key(|&i| disco::engine::mix64(i as u64));
    let c = c.reordered(&order);
    let target = pair(&c);
    let pe = 5.0;
    let runs = 4000;
    let mut sum = 0.0;
    for seed in 0..runs {
        let mut s = StreamState::new(p(pe), seed);
        for d in c.documents() {
            s.update(d);
        }
        sum += s.query_seeded(target.first(), target.second(), seed ^ 0xABCD).unwrap();
    }
    let mean = sum / runs as f64;
    // Survivors ~ Binomial(25, 0.1), estimate = survivors / 5.
    let sd = (25.0 * 0.1 * 0.9 / 25.0 / runs as f64).sqrt();
    assert!((mean - 0.5).abs() < 4.0 * sd, "mean {mean}");
}

#[test]
fn minhash_table_matches_direct_minimum() {
    let c = generate_synthetic(300, 50, 6, 1.0, 2).unwrap();
    let family = HashFamily::new(16, 77).unwrap();
    let run = minhash_full(&c, &family, &MinHashOptions::default()).unwrap();
    for w in 0..c.num_words() as u32 {
        for j in 0..16 {
            let best = c
                .documents()
                .iter()
                .filter(|d| d.words().contains(&disco::WordId(w)))
                .map(|d| (family.hash_value(j, d.doc_id), d.doc_id))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap();
            let e = run.table.get(disco::WordId(w), j).unwrap();
            assert_eq!((e.value, e.doc_id), best);
        }
    }
}

#[test]
fn unbounded_threshold_reproduces_full_table() {
    let c = generate_synthetic(500, 60, 5, 1.0, 3).unwrap();
    let family = HashFamily::with_constant(8, 5, 1e12).unwrap();
    let full = minhash_full(&c, &family, &MinHashOptions::default()).unwrap();
    let sampled = minhash_sampled(&c, &family, &MinHashOptions::default()).unwrap();
    assert_eq!(full.table, sampled.table);
    assert_eq!(full.metrics.shuffle_size, sampled.metrics.shuffle_size);
}

#[test]
fn jaccard_estimate_is_unbiased_over_hash_seeds() {
    // #x = #y = 30, 15 shared: J = 15 / 45.
    let c = planted(30, 15);
    let target = pair(&c);
    let (k, runs) = (20, 400);
    let mut sum = 0.0;
    for seed in 0..runs {
        let family = HashFamily::new(k, seed).unwrap();
        let t = minhash_full(&c, &family, &MinHashOptions::default()).unwrap().table;
        sum += jaccard_estimate(&t, target.first(), target.second()).unwrap();
    }
    let j = 1.0 / 3.0;
    let mean = sum / runs as f64;
    let sd = (j * (1.0 - j) / (k as f64 * runs as f64)).sqrt();
    assert!((mean - j).abs() < 4.0 * sd, "mean {mean}");
}
