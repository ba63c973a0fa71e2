use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use super::retrieval::cosine;
use crate::error::{Error, Result};
use crate::model::WordVectors;
use crate::scalar::Real;

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Misaligned(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewRows(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Word pairs with human similarity judgements.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimilarityDataset {
    pub rows: Vec<(String, String, f64)>,
}

impl SimilarityDataset {
    /// `w1 w2 score` per line, tab or space separated. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn read<R: BufRead>(r: R, name: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::parse(name, i + 1, "expected `word1 word2 score`"));
            }
            let score: f64 = fields[2]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::parse(name, i + 1, format!("bad score {:?}", fields[2])))?;
            rows.push((fields[0].to_owned(), fields[1].to_owned(), score));
        }
        Ok(SimilarityDataset { rows })
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read(BufReader::new(f), &path.display().to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimilarityResult {
    pub pearson: f64,
    pub used: usize,
    pub total: usize,
}

impl SimilarityResult {
    pub fn coverage(&self) -> f64 {
        self.used as f64 / self.total.max(1) as f64
    }
}

/// Pearson correlation between cosine similarity and human scores, over the
/// rows whose words both have vectors.
pub fn word_similarity_eval<T: Real>(
    vectors: &WordVectors<T>,
    ds: &SimilarityDataset,
) -> Result<SimilarityResult> {
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    for (a, b, score) in &ds.rows {
        if let (Some(va), Some(vb)) = (vectors.get(a), vectors.get(b)) {
            predicted.push(cosine(va, vb)?.as_f64());
            gold.push(*score);
        }
    }
    if predicted.len() < 2 {
        return Err(Error::TooFewRows(predicted.len()));
    }
    Ok(SimilarityResult {
        pearson: pearson(&predicted, &gold)?,
        used: predicted.len(),
        total: ds.rows.len(),
    })
}
