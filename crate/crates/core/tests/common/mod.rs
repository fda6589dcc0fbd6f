#![allow(dead_code)]

use std::collections::BTreeMap;

use disco::corpus::{Corpus, CorpusBuilder, WordId};
use disco::MeasureKind;

/// Exact scores from a direct scan: every pair of distinct words that share
/// a document, counted by walking each document's word list.
pub fn brute_scores(corpus: &Corpus, measure: MeasureKind) -> BTreeMap<(u32, u32), f64> {
    let mut counts = vec![0u64; corpus.num_words()];
    let mut both: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for doc in corpus.documents() {
        let w = doc.words();
        for &a in w {
            counts[a.0 as usize] += 1;
        }
        for i in 0..w.len() {
            for j in i + 1..w.len() {
                let key = (w[i].0.min(w[j].0), w[i].0.max(w[j].0));
                *both.entry(key).or_insert(0) += 1;
            }
        }
    }
    both.into_iter()
        .map(|((x, y), xy)| {
            let (cx, cy, xy) = (counts[x as usize] as f64, counts[y as usize] as f64, xy as f64);
            let s = match measure {
                MeasureKind::Cosine => xy / (cx * cy).sqrt(),
                MeasureKind::Jaccard => xy / (cx + cy - xy),
                MeasureKind::Overlap => xy / cx.min(cy),
                MeasureKind::Dice => 2.0 * xy / (cx + cy),
            };
            ((x, y), s)
        })
        .collect()
}

/// Small random corpus from a splitmix-style stream, independent of the
/// library generators.
pub fn random_corpus(seed: u64, docs: usize, dict: usize, max_len: usize) -> Corpus {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    let mut next = move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut b = CorpusBuilder::new();
    let tokens: Vec<String> = (0..dict).map(|i| format!("t{i}")).collect();
    for _ in 0..docs {
        let len = 1 + (next() % max_len as u64) as usize;
        let words: Vec<&str> = (0..len).map(|_| tokens[(next() % dict as u64) as usize].as_str()).collect();
        b.push_tokens(words);
    }
    b.finish()
}

pub fn id(c: &Corpus, token: &str) -> WordId {
    c.dictionary().get(token).unwrap_or_else(|| panic!("no token {token}"))
}
