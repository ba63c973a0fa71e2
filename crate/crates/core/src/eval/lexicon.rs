use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use super::retrieval::{best_matches, Criterion, EmbeddingSet};
use crate::error::{Error, Result};
use crate::model::WordVectors;
use crate::scalar::Real;

/// Gold translations, one source word mapping to one or more targets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BilingualDictionary {
    entries: Vec<(String, Vec<String>)>,
}

impl BilingualDictionary {
    /// Merge `(source, target)` pairs; first-seen order of sources is kept.
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (src, tgt) in pairs {
            let (src, tgt) = (src.into(), tgt.into());
            let slot = *index.entry(src.clone()).or_insert_with(|| {
                entries.push((src, Vec::new()));
                entries.len() - 1
            });
            let gold = &mut entries[slot].1;
            if !gold.contains(&tgt) {
                gold.push(tgt);
            }
        }
        BilingualDictionary { entries }
    }

    /// One `source target` pair per line, whitespace separated.
    pub fn read<R: BufRead>(r: R, name: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            match (fields.next(), fields.next(), fields.next()) {
                (None, _, _) => continue,
                (Some(s), Some(t), None) => pairs.push((s.to_owned(), t.to_owned())),
                _ => {
                    return Err(Error::parse(
                        name,
                        i + 1,
                        "expected `source target`",
                    ))
                }
            }
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read(BufReader::new(f), &path.display().to_string())
    }

    pub fn entries(&self) -> &[(String, Vec<String>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Swap source and target sides.
    pub fn reversed(&self) -> Self {
        Self::from_pairs(
            self.entries
                .iter()
                .flat_map(|(s, golds)| golds.iter().map(move |g| (g.clone(), s.clone()))),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TranslationResult {
    pub p_at_1: f64,
    /// Queries actually scored.
    pub evaluated: usize,
    /// Dictionary sources considered (at most `max_queries`).
    pub considered: usize,
}

impl TranslationResult {
    pub fn coverage(&self) -> f64 {
        if self.considered == 0 {
            0.0
        } else {
            self.evaluated as f64 / self.considered as f64
        }
    }
}

/// Word translation precision at 1.
///
/// The first `max_queries` dictionary sources are considered; a source is
/// scored when it has a vector and at least one gold target has a vector.
/// Candidates are the `max_targets` first (most frequent) target words; the
/// CSLS source-side penalty uses the same number of source words.
pub fn word_translation_p1<T: Real>(
    source: &WordVectors<T>,
    target: &WordVectors<T>,
    dict: &BilingualDictionary,
    criterion: Criterion,
    csls_k: usize,
    max_queries: usize,
    max_targets: usize,
) -> Result<TranslationResult> {
    let considered: Vec<_> = dict.entries().iter().take(max_queries).collect();
    let scored: Vec<_> = considered
        .iter()
        .filter(|(s, golds)| {
            source.index_of(s).is_some() && golds.iter().any(|g| target.index_of(g).is_some())
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::EmptyOverlap);
    }

    let pool = EmbeddingSet::from_vectors(&target.truncated(max_targets))?;
    let source_pool = EmbeddingSet::from_vectors(&source.truncated(max_targets))?;
    let queries = EmbeddingSet::from_rows(
        scored.iter().map(|(s, _)| s.clone()).collect(),
        scored.iter().map(|(s, _)| source.get(s).unwrap()),
        source.dim(),
    )?;
    let best = best_matches(&queries, &source_pool, &pool, criterion, csls_k)?;
    let hits = best
        .iter()
        .zip(&scored)
        .filter(|(&b, (_, golds))| golds.contains(&pool.labels()[b]))
        .count();
    Ok(TranslationResult {
        p_at_1: hits as f64 / scored.len() as f64,
        evaluated: scored.len(),
        considered: considered.len(),
    })
}
