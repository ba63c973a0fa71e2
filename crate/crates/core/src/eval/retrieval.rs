use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Matrix, WordVectors};
use crate::scalar::{dot, norm, Real};

/// Retrieval criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Plain cosine nearest neighbour.
    Nn,
    /// Cross-domain similarity local scaling.
    Csls,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Nn => "nn",
            Criterion::Csls => "csls",
        })
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "nn" => Ok(Criterion::Nn),
            "csls" => Ok(Criterion::Csls),
            other => Err(format!("unknown criterion {other:?} (expected nn or csls)")),
        }
    }
}

pub fn cosine<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        return Err(Error::ZeroVector);
    }
    let c = dot(a, b) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Unit-normalized copies of a set of vectors.
#[derive(Clone, Debug)]
pub struct EmbeddingSet<T> {
    labels: Vec<String>,
    matrix: Matrix<T>,
}

impl<T: Real> EmbeddingSet<T> {
    pub fn from_rows<I>(labels: Vec<String>, rows: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: AsRef<[T]>,
    {
        let mut data = Vec::with_capacity(labels.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: row.len(),
                });
            }
            let n = norm(row);
            if n == T::zero() || !n.is_finite() {
                return Err(Error::ZeroVector);
            }
            data.extend(row.iter().map(|&x| x / n));
        }
        let rows = data.len() / dim.max(1);
        if rows != labels.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                found: rows,
            });
        }
        Ok(EmbeddingSet {
            labels,
            matrix: Matrix::from_vec(rows, dim, data)?,
        })
    }

    pub fn from_vectors(v: &WordVectors<T>) -> Result<Self> {
        Self::from_rows(v.words().to_vec(), v.matrix().iter_rows(), v.dim())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        self.matrix.row(i)
    }

    /// Dot products of `q` with every row.
    fn similarities(&self, q: &[T]) -> Vec<T> {
        self.matrix.iter_rows().map(|r| dot(q, r)).collect()
    }
}

fn by_score_then_index<T: Real>(scores: &[T]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// Indices of the `k` highest scores, best first, ties to the lower index.
pub(crate) fn top_k<T: Real>(scores: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let cmp = by_score_then_index(scores);
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, &cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(&cmp);
    idx.truncate(k);
    idx
}

/// Index of the highest score, ties to the lower index.
pub(crate) fn argmax<T: Real>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn mean_top_k<T: Real>(mut sims: Vec<T>, k: usize) -> T {
    let k = k.min(sims.len());
    if k == 0 {
        return T::zero();
    }
    if k < sims.len() {
        sims.select_nth_unstable_by(k - 1, |a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    }
    sims[..k].iter().copied().sum::<T>() / T::of(k as f64)
}

/// Top-`k` targets of `query` by cosine similarity.
pub fn nn_retrieve<T: Real>(query: &[T], targets: &EmbeddingSet<T>, k: usize) -> Result<Vec<usize>> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    if k > targets.len() {
        return Err(Error::NeighbourhoodTooLarge {
            k,
            n: targets.len(),
        });
    }
    let n = norm(query);
    if n == T::zero() {
        return Err(Error::ZeroVector);
    }
    let q: Vec<T> = query.iter().map(|&x| x / n).collect();
    Ok(top_k(&targets.similarities(&q), k))
}

/// CSLS scores `2 cos(x, y) - r_T(x) - r_S(y)`.
///
/// `r_T(x)` is the mean cosine of query `x` to its `k` nearest targets and
/// `r_S(y)` the mean cosine of target `y` to its `k` nearest vectors of the
/// source pool.
pub struct Csls<'a, T> {
    queries: &'a EmbeddingSet<T>,
    targets: &'a EmbeddingSet<T>,
    query_penalty: Vec<T>,
    target_penalty: Vec<T>,
}

impl<'a, T: Real> Csls<'a, T> {
    /// Queries double as the source pool.
    pub fn new(sources: &'a EmbeddingSet<T>, targets: &'a EmbeddingSet<T>, k: usize) -> Result<Self> {
        Self::with_pool(sources, sources, targets, k)
    }

    pub fn with_pool(
        queries: &'a EmbeddingSet<T>,
        source_pool: &EmbeddingSet<T>,
        targets: &'a EmbeddingSet<T>,
        k: usize,
    ) -> Result<Self> {
        if targets.is_empty() || source_pool.is_empty() {
            return Err(Error::EmptyTargets);
        }
        let n = source_pool.len().min(targets.len());
        if k == 0 || k > n {
            return Err(Error::NeighbourhoodTooLarge { k, n });
        }
        let query_penalty = (0..queries.len())
            .into_par_iter()
            .map(|i| mean_top_k(targets.similarities(queries.row(i)), k))
            .collect();
        let target_penalty = (0..targets.len())
            .into_par_iter()
            .map(|j| mean_top_k(source_pool.similarities(targets.row(j)), k))
            .collect();
        Ok(Csls {
            queries,
            targets,
            query_penalty,
            target_penalty,
        })
    }

    pub fn query_penalty(&self) -> &[T] {
        &self.query_penalty
    }

    pub fn target_penalty(&self) -> &[T] {
        &self.target_penalty
    }

    pub fn scores(&self, query: usize) -> Vec<T> {
        let two = T::of(2.0);
        let rq = self.query_penalty[query];
        self.targets
            .similarities(self.queries.row(query))
            .into_iter()
            .zip(&self.target_penalty)
            .map(|(c, &rs)| two * c - rq - rs)
            .collect()
    }

    pub fn best(&self, query: usize) -> usize {
        argmax(&self.scores(query))
    }

    pub fn top_k(&self, query: usize, k: usize) -> Vec<usize> {
        top_k(&self.scores(query), k)
    }
}

/// CSLS argmax target for every source.
pub fn csls_retrieve<T: Real>(
    sources: &EmbeddingSet<T>,
    targets: &EmbeddingSet<T>,
    k: usize,
) -> Result<Vec<usize>> {
    let csls = Csls::new(sources, targets, k)?;
    Ok((0..sources.len()).into_par_iter().map(|i| csls.best(i)).collect())
}

/// Best target per query under `criterion`.
pub(crate) fn best_matches<T: Real>(
    queries: &EmbeddingSet<T>,
    source_pool: &EmbeddingSet<T>,
    targets: &EmbeddingSet<T>,
    criterion: Criterion,
    k: usize,
) -> Result<Vec<usize>> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    match criterion {
        Criterion::Nn => Ok((0..queries.len())
            .into_par_iter()
            .map(|i| argmax(&targets.similarities(queries.row(i))))
            .collect()),
        Criterion::Csls => {
            let csls = Csls::with_pool(queries, source_pool, targets, k)?;
            Ok((0..queries.len()).into_par_iter().map(|i| csls.best(i)).collect())
        }
    }
}
