use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use super::retrieval::{best_matches, Criterion, EmbeddingSet};
use super::{DEFAULT_CANDIDATES, DEFAULT_CSLS_K, DEFAULT_SR_QUERIES};
use crate::error::{Error, Result};
use crate::model::WordVectors;
use crate::scalar::Real;

/// Inverse document frequencies over a sentence collection, natural log.
/// Unseen words are treated as occurring in one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct IdfTable {
    n_docs: usize,
    df: HashMap<String, u64>,
}

impl IdfTable {
    pub fn build<I, S>(sentences: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut df: HashMap<String, u64> = HashMap::new();
        let mut n_docs = 0;
        for s in sentences {
            n_docs += 1;
            let mut seen = HashSet::new();
            for tok in s.as_ref().split_whitespace() {
                if seen.insert(tok) {
                    *df.entry(tok.to_owned()).or_insert(0) += 1;
                }
            }
        }
        if n_docs == 0 {
            return Err(Error::EmptyInput("idf corpus has no sentences"));
        }
        Ok(IdfTable { n_docs, df })
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn idf(&self, word: &str) -> f64 {
        let df = self.df.get(word).copied().unwrap_or(1);
        (self.n_docs as f64 / df as f64).ln()
    }
}

/// tf-idf weighted average of the word vectors of a tokenized sentence.
pub fn sentence_embed_tfidf<T: Real>(
    sentence: &str,
    idf: &IdfTable,
    vectors: &WordVectors<T>,
) -> Result<Vec<T>> {
    // keyed by row so the sum does not depend on token order
    let mut tf: BTreeMap<usize, (u32, &str)> = BTreeMap::new();
    for tok in sentence.split_whitespace() {
        if let Some(i) = vectors.index_of(tok) {
            tf.entry(i).or_insert((0, tok)).0 += 1;
        }
    }
    if tf.is_empty() {
        return Err(Error::AllOov);
    }
    let mut out = vec![T::zero(); vectors.dim()];
    let mut total = T::zero();
    for (&row, &(count, word)) in &tf {
        let w = T::of(count as f64 * idf.idf(word));
        if w == T::zero() {
            continue;
        }
        total += w;
        for (o, &x) in out.iter_mut().zip(vectors.matrix().row(row)) {
            *o += w * x;
        }
    }
    if total == T::zero() {
        return Err(Error::AllOov);
    }
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

/// Source and target embedding of one aligned pair.
type Pair<T> = (Vec<T>, Vec<T>);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetrievalOptions {
    pub criterion: Criterion,
    pub csls_k: usize,
    pub max_queries: usize,
    pub max_candidates: usize,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        RetrievalOptions {
            criterion: Criterion::Csls,
            csls_k: DEFAULT_CSLS_K,
            max_queries: DEFAULT_SR_QUERIES,
            max_candidates: DEFAULT_CANDIDATES,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct DirectionResult {
    pub p_at_1: f64,
    pub queries: usize,
}

/// Precision at 1 in both directions (`forward`: first language queries).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SentenceRetrieval {
    pub forward: DirectionResult,
    pub backward: DirectionResult,
    /// Pairs dropped because a side had no usable tokens.
    pub excluded: usize,
    /// Pairs left in the candidate pool.
    pub candidates: usize,
}

/// Cross-lingual sentence retrieval over aligned sets; sentence `i` of one
/// side is the translation of sentence `i` of the other.
///
/// The first `max_candidates` pairs form the pool; pairs with a side that
/// cannot be embedded are excluded. The first `max_queries` remaining pairs
/// are queried.
pub fn sentence_retrieval_p1<T: Real>(
    source_sentences: &[String],
    target_sentences: &[String],
    source_vectors: &WordVectors<T>,
    target_vectors: &WordVectors<T>,
    source_idf: &IdfTable,
    target_idf: &IdfTable,
    opts: &RetrievalOptions,
) -> Result<SentenceRetrieval> {
    if source_sentences.len() != target_sentences.len() {
        return Err(Error::Misaligned(
            source_sentences.len(),
            target_sentences.len(),
        ));
    }
    let n = source_sentences.len().min(opts.max_candidates);
    let embedded: Vec<Option<Pair<T>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = sentence_embed_tfidf(&source_sentences[i], source_idf, source_vectors).ok()?;
            let t = sentence_embed_tfidf(&target_sentences[i], target_idf, target_vectors).ok()?;
            Some((s, t))
        })
        .collect();
    let kept: Vec<(usize, Pair<T>)> = embedded
        .into_iter()
        .enumerate()
        .filter_map(|(i, e)| e.map(|e| (i, e)))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyTargets);
    }
    let labels: Vec<String> = kept.iter().map(|(i, _)| i.to_string()).collect();
    let sources = EmbeddingSet::from_rows(
        labels.clone(),
        kept.iter().map(|(_, (s, _))| s),
        source_vectors.dim(),
    )?;
    let targets = EmbeddingSet::from_rows(
        labels,
        kept.iter().map(|(_, (_, t))| t),
        target_vectors.dim(),
    )?;
    let n_queries = kept.len().min(opts.max_queries);

    let direction = |from: &EmbeddingSet<T>, to: &EmbeddingSet<T>| -> Result<DirectionResult> {
        let queries = EmbeddingSet::from_rows(
            from.labels()[..n_queries].to_vec(),
            (0..n_queries).map(|i| from.row(i)),
            from.dim(),
        )?;
        let best = best_matches(&queries, from, to, opts.criterion, opts.csls_k)?;
        let hits = best.iter().enumerate().filter(|&(i, &b)| i == b).count();
        Ok(DirectionResult {
            p_at_1: hits as f64 / n_queries as f64,
            queries: n_queries,
        })
    };

    Ok(SentenceRetrieval {
        forward: direction(&sources, &targets)?,
        backward: direction(&targets, &sources)?,
        excluded: n - kept.len(),
        candidates: kept.len(),
    })
}
