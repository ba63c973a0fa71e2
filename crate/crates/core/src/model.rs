//! Parameter matrices, sentence composition, and model persistence.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LanguageId, VocabEntry, Vocabulary};
use crate::error::{Error, Result};
use crate::ngram::{context_of, ContextIndices};
use crate::scalar::Real;
use crate::trainer::TrainConfig;

pub const MAGIC: [u8; 4] = *b"BS2V";
pub const FORMAT_VERSION: u32 = 1;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

/// Source n-gram matrix (`input`, unigram rows then bucket rows) and target
/// word matrix (`output`) living in one space.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrices<T> {
    pub input: Matrix<T>,
    pub output: Matrix<T>,
}

impl<T: Real> EmbeddingMatrices<T> {
    /// Input rows uniform on `[-1/dim, 1/dim]`, output rows zero.
    pub fn init(n_words: usize, bucket_rows: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / dim as f64;
        let mut input = Matrix::zeros(n_words + bucket_rows, dim);
        for x in input.as_mut_slice() {
            *x = T::of(rng.gen_range(-bound..=bound));
        }
        EmbeddingMatrices {
            input,
            output: Matrix::zeros(n_words, dim),
        }
    }

    pub fn for_vocab(vocab: &Vocabulary, cfg: &TrainConfig) -> Self {
        Self::init(vocab.len(), cfg.ngrams.bucket_rows(), cfg.dim, cfg.seed)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    #[inline]
    pub fn n_words(&self) -> usize {
        self.output.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite() && self.output.is_finite()
    }

    pub fn compose(&self, ctx: &ContextIndices) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim()];
        self.compose_into(ctx.as_slice(), &mut out)?;
        Ok(out)
    }

    /// Mean of the selected input rows.
    pub fn compose_into(&self, rows: &[usize], out: &mut [T]) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::EmptyContext);
        }
        out.iter_mut().for_each(|x| *x = T::zero());
        for &r in rows {
            for (o, &v) in out.iter_mut().zip(self.input.row(r)) {
                *o += v;
            }
        }
        let scale = T::one() / T::of(rows.len() as f64);
        out.iter_mut().for_each(|x| *x *= scale);
        Ok(())
    }
}

/// Which matrix word vectors are read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorSource {
    /// Unigram rows of the input matrix; the vectors used for evaluation.
    Input,
    Output,
}

/// A trained model: configuration, vocabulary and both matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct BilingualModel<T> {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub matrices: EmbeddingMatrices<T>,
}

impl<T: Real> BilingualModel<T> {
    pub fn dim(&self) -> usize {
        self.matrices.dim()
    }

    pub fn word_vectors(&self, lang: LanguageId, source: VectorSource) -> WordVectors<T> {
        let range = self.vocab.range(lang);
        let matrix = match source {
            VectorSource::Input => &self.matrices.input,
            VectorSource::Output => &self.matrices.output,
        };
        let words = range
            .clone()
            .map(|i| self.vocab.entry(i).surface.clone())
            .collect();
        let data = range.flat_map(|i| matrix.row(i).iter().copied()).collect();
        WordVectors::new(words, Matrix::from_vec(self.vocab.n_words_of(lang), self.dim(), data).unwrap())
    }

    /// Embedding of a tokenized sentence by n-gram averaging (no dropout).
    pub fn embed_sentence(&self, lang: LanguageId, sentence: &str) -> Result<Vec<T>> {
        let tokens = self.vocab.encode(lang, sentence);
        if tokens.is_empty() {
            return Err(Error::AllOov);
        }
        let ctx = context_of(&tokens, lang, &self.config.ngrams, self.vocab.len())?;
        self.matrices.compose(&ctx)
    }

    pub fn export_text(
        &self,
        lang: LanguageId,
        source: VectorSource,
        path: impl AsRef<Path>,
    ) -> Result<()> {
        self.word_vectors(lang, source).write_text_file(path)
    }
}

impl BilingualModel<f32> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;

        let config = serde_json::to_vec(&self.config)
            .map_err(|e| Error::Malformed(format!("config: {e}")))?;
        w.write_u32::<LittleEndian>(config.len() as u32)?;
        w.write_all(&config)?;

        let v = &self.vocab;
        w.write_f64::<LittleEndian>(v.threshold())?;
        w.write_u64::<LittleEndian>(v.min_count())?;
        for lang in LanguageId::BOTH {
            w.write_u64::<LittleEndian>(v.total_tokens(lang))?;
        }
        w.write_u64::<LittleEndian>(v.len() as u64)?;
        for e in v.entries() {
            w.write_u8(e.lang.tag())?;
            w.write_u64::<LittleEndian>(e.count)?;
            w.write_f64::<LittleEndian>(e.keep_prob)?;
            w.write_u32::<LittleEndian>(e.surface.len() as u32)?;
            w.write_all(e.surface.as_bytes())?;
        }

        for m in [&self.matrices.input, &self.matrices.output] {
            w.write_u64::<LittleEndian>(m.rows() as u64)?;
            w.write_u64::<LittleEndian>(m.cols() as u64)?;
            let mut buf = Vec::with_capacity(m.as_slice().len() * 4);
            for &x in m.as_slice() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic, "header")?;
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.read_u32::<LittleEndian>().map_err(eof("header"))?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }

        let len = r.read_u32::<LittleEndian>().map_err(eof("config"))? as usize;
        let mut config = vec![0u8; len];
        read_exact(r, &mut config, "config")?;
        let config: TrainConfig = serde_json::from_slice(&config)
            .map_err(|e| Error::Malformed(format!("config: {e}")))?;

        let t = r.read_f64::<LittleEndian>().map_err(eof("vocabulary"))?;
        let min_count = r.read_u64::<LittleEndian>().map_err(eof("vocabulary"))?;
        let mut totals = [0u64; 2];
        for total in totals.iter_mut() {
            *total = r.read_u64::<LittleEndian>().map_err(eof("vocabulary"))?;
        }
        let n = r.read_u64::<LittleEndian>().map_err(eof("vocabulary"))? as usize;
        let mut entries = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let tag = r.read_u8().map_err(eof("vocabulary"))?;
            let lang = LanguageId::from_tag(tag)
                .ok_or_else(|| Error::Malformed(format!("language tag {tag}")))?;
            let count = r.read_u64::<LittleEndian>().map_err(eof("vocabulary"))?;
            let keep_prob = r.read_f64::<LittleEndian>().map_err(eof("vocabulary"))?;
            let slen = r.read_u32::<LittleEndian>().map_err(eof("vocabulary"))? as usize;
            let mut surface = vec![0u8; slen];
            read_exact(r, &mut surface, "vocabulary")?;
            let surface = String::from_utf8(surface)
                .map_err(|e| Error::Malformed(format!("surface: {e}")))?;
            entries.push(VocabEntry {
                surface,
                lang,
                count,
                keep_prob,
            });
        }
        let vocab = Vocabulary::from_parts(entries, totals, t, min_count)?;

        let input = read_matrix(r, "input matrix")?;
        let output = read_matrix(r, "output matrix")?;
        let expected_in = vocab.len() + config.ngrams.bucket_rows();
        if input.rows() != expected_in || output.rows() != vocab.len() {
            return Err(Error::Malformed(format!(
                "matrix rows {}/{} do not match vocabulary ({}) and buckets ({})",
                input.rows(),
                output.rows(),
                vocab.len(),
                config.ngrams.bucket_rows()
            )));
        }
        if input.cols() != config.dim || output.cols() != config.dim {
            return Err(Error::Dimension {
                expected: config.dim,
                found: input.cols(),
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Malformed("trailing bytes after output matrix".into()));
        }
        Ok(BilingualModel {
            config,
            vocab,
            matrices: EmbeddingMatrices { input, output },
        })
    }
}

fn eof(what: &'static str) -> impl Fn(std::io::Error) -> Error {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Malformed(format!("file ends inside {what}"))
        } else {
            Error::Io(e)
        }
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(eof(what))
}

fn read_matrix<R: Read>(r: &mut R, what: &'static str) -> Result<Matrix<f32>> {
    let rows = r.read_u64::<LittleEndian>().map_err(eof(what))?;
    let cols = r.read_u64::<LittleEndian>().map_err(eof(what))?;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Malformed(format!("{what} shape {rows}x{cols} overflows")))?;
    let mut buf = Vec::new();
    r.take(expected).read_to_end(&mut buf)?;
    if (buf.len() as u64) < expected {
        return Err(Error::Truncated {
            what,
            expected,
            found: buf.len() as u64,
        });
    }
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Matrix::from_vec(rows as usize, cols as usize, data)
}

/// Per-language word vectors in word2vec text layout.
#[derive(Clone, Debug, PartialEq)]
pub struct WordVectors<T> {
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Matrix<T>,
}

impl<T: Real> WordVectors<T> {
    pub fn new(words: Vec<String>, matrix: Matrix<T>) -> Self {
        assert_eq!(words.len(), matrix.rows());
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        WordVectors {
            words,
            index,
            matrix,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.index_of(word).map(|i| self.matrix.row(i))
    }

    /// The first `n` rows (the `n` most frequent words for model exports).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let data = self.matrix.as_slice()[..n * self.dim()].to_vec();
        WordVectors::new(
            self.words[..n].to_vec(),
            Matrix::from_vec(n, self.dim(), data).unwrap(),
        )
    }

    /// Header `n dim`, then `word v1 ... vdim` with 6 significant digits.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim())?;
        let mut line = String::new();
        for (word, row) in self.words.iter().zip(self.matrix.iter_rows()) {
            line.clear();
            line.push_str(word);
            for &x in row {
                line.push(' ');
                line.push_str(&format_sig6(x.as_f64()));
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn write_text_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R, name: &str) -> Result<Self> {
        let mut lines = r.lines();
        let header = match lines.next() {
            Some(l) => l?,
            None => return Err(Error::parse(name, 1, "missing header")),
        };
        let mut fields = header.split_whitespace();
        let (n, dim) = match (
            fields.next().and_then(|s| s.parse::<usize>().ok()),
            fields.next().and_then(|s| s.parse::<usize>().ok()),
        ) {
            (Some(n), Some(d)) => (n, d),
            _ => return Err(Error::parse(name, 1, "header must be `n_words dim`")),
        };
        let mut words = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let word = parts.next().unwrap_or_default();
            let before = data.len();
            for p in parts.filter(|p| !p.is_empty()) {
                let x: T = p
                    .parse()
                    .map_err(|_| Error::parse(name, lineno, format!("bad number {p:?}")))?;
                data.push(x);
            }
            if data.len() - before != dim {
                return Err(Error::parse(
                    name,
                    lineno,
                    format!("expected {dim} values, found {}", data.len() - before),
                ));
            }
            words.push(word.to_owned());
        }
        if words.len() != n {
            return Err(Error::parse(
                name,
                n + 1,
                format!("header announces {n} words, found {}", words.len()),
            ));
        }
        Ok(WordVectors::new(words, Matrix::from_vec(n, dim, data)?))
    }

    pub fn read_text_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_text(BufReader::new(file), &path.display().to_string())
    }
}

/// `%g`-style rendering with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
