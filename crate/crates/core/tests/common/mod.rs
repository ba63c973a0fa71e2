#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use bisent2vec::eval::BilingualDictionary;
use bisent2vec::{NgramConfig, TrainConfig};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Parallel corpus whose second side renames every first-side token through
/// a fixed random bijection.
pub struct Cipher {
    pub l1: Vec<String>,
    pub l2: Vec<String>,
    /// `perm[i]` is the second-language index of first-language word `i`.
    pub perm: Vec<usize>,
    pub vocab: usize,
}

pub fn l1_word(i: usize) -> String {
    format!("w{i}")
}

pub fn l2_word(j: usize) -> String {
    format!("v{j}")
}

pub fn zipf(n: usize) -> WeightedIndex<f64> {
    zipf_exp(n, 1.0)
}

pub fn zipf_exp(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| (r as f64).powf(-s))).unwrap()
}

pub const SUCCESSOR_EXPONENT: f64 = 1.0;

impl Cipher {
    pub fn generate(vocab: usize, pairs: usize, seed: u64) -> Self {
        Self::generate_with(vocab, pairs, seed, SUCCESSOR_EXPONENT)
    }

    pub fn generate_with(vocab: usize, pairs: usize, seed: u64, exponent: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..vocab).collect();
        perm.shuffle(&mut rng);
        // Each word gets its own Zipf-ranked successor order, so words differ
        // in the company they keep.
        let dist = zipf(vocab);
        let next = zipf_exp(vocab, exponent);
        let successors: Vec<Vec<usize>> = (0..vocab)
            .map(|_| {
                let mut order: Vec<usize> = (0..vocab).collect();
                order.shuffle(&mut rng);
                order
            })
            .collect();
        let mut l1 = Vec::with_capacity(pairs);
        let mut l2 = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            let len = rng.gen_range(5..=12);
            let mut ids = vec![dist.sample(&mut rng)];
            while ids.len() < len {
                let prev = *ids.last().unwrap();
                ids.push(successors[prev][next.sample(&mut rng)]);
            }
            l1.push(ids.iter().map(|&i| l1_word(i)).collect::<Vec<_>>().join(" "));
            l2.push(ids.iter().map(|&i| l2_word(perm[i])).collect::<Vec<_>>().join(" "));
        }
        Cipher { l1, l2, perm, vocab }
    }

    pub fn translate(&self, sentence: &str) -> String {
        sentence
            .split_whitespace()
            .map(|w| l2_word(self.perm[w[1..].parse::<usize>().unwrap()]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn dictionary(&self) -> BilingualDictionary {
        BilingualDictionary::from_pairs((0..self.vocab).map(|i| (l1_word(i), l2_word(self.perm[i]))))
    }

    /// Writes the first `n` pairs; returns both paths.
    pub fn write(&self, dir: &Path, n: usize) -> (PathBuf, PathBuf) {
        let p1 = dir.join("corpus.l1");
        let p2 = dir.join("corpus.l2");
        fs::write(&p1, self.l1[..n].join("\n") + "\n").unwrap();
        fs::write(&p2, self.l2[..n].join("\n") + "\n").unwrap();
        (p1, p2)
    }
}

pub const CIPHER_VOCAB: usize = 100;
pub const CIPHER_PAIRS: usize = 5000;
pub const HELD_OUT: usize = 200;
pub const CIPHER_SEED: u64 = 7;
pub const CIPHER_T: f64 = 1e-4;

pub fn cipher() -> Cipher {
    Cipher::generate(CIPHER_VOCAB, CIPHER_PAIRS + HELD_OUT, CIPHER_SEED)
}

pub fn cipher_config(threads: usize) -> TrainConfig {
    TrainConfig {
        dim: 50,
        epochs: 5,
        lr: 0.2,
        negatives: 10,
        ngrams: NgramConfig::unigrams(),
        // a 100-word vocabulary puts every word above 1e-3 relative frequency
        t: CIPHER_T,
        threads,
        ..TrainConfig::default()
    }
}

/// Documents whose sentences draw only from the topic pool `label`
/// (words `i` with `i % pools == label`), Zipf-weighted within the pool.
pub fn topic_documents(
    vocab: usize,
    pools: usize,
    per_class: usize,
    sentences: usize,
    seed: u64,
) -> Vec<(usize, Vec<Vec<usize>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members: Vec<Vec<usize>> = (0..pools)
        .map(|k| (k..vocab).step_by(pools).collect())
        .collect();
    let dists: Vec<WeightedIndex<f64>> = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&i| 1.0 / (i + 1) as f64)).unwrap())
        .collect();
    let mut docs = Vec::new();
    for _ in 0..per_class {
        for label in 0..pools {
            let doc = (0..sentences)
                .map(|_| {
                    let len = rng.gen_range(5..=12);
                    (0..len)
                        .map(|_| members[label][dists[label].sample(&mut rng)])
                        .collect()
                })
                .collect();
            docs.push((label, doc));
        }
    }
    docs
}
