//! Parallel corpus ingestion: the language-tagged vocabulary, target
//! subsampling, and the negative sampling table.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the two languages of a bilingual model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LanguageId {
    L1,
    L2,
}

impl LanguageId {
    pub const BOTH: [LanguageId; 2] = [LanguageId::L1, LanguageId::L2];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            LanguageId::L1 => 0,
            LanguageId::L2 => 1,
        }
    }

    /// Byte used to tag the language in hashes and on disk.
    #[inline]
    pub fn tag(self) -> u8 {
        self.index() as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(LanguageId::L1),
            1 => Some(LanguageId::L2),
            _ => None,
        }
    }

    #[inline]
    pub fn other(self) -> Self {
        match self {
            LanguageId::L1 => LanguageId::L2,
            LanguageId::L2 => LanguageId::L1,
        }
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanguageId::L1 => f.write_str("l1"),
            LanguageId::L2 => f.write_str("l2"),
        }
    }
}

impl std::str::FromStr for LanguageId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "1" => Ok(LanguageId::L1),
            "l2" | "2" => Ok(LanguageId::L2),
            other => Err(format!("unknown language {other:?} (expected l1 or l2)")),
        }
    }
}

/// Probability of keeping a word as a training target,
/// `min(1, sqrt(t/f) + t/f)` with `f = count / total`.
pub fn keep_prob(count: u64, total: u64, t: f64) -> f64 {
    debug_assert!(count >= 1 && total >= count && t > 0.0);
    let ratio = t / (count as f64 / total as f64);
    (ratio.sqrt() + ratio).min(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VocabEntry {
    pub surface: String,
    pub lang: LanguageId,
    pub count: u64,
    pub keep_prob: f64,
}

/// Bilingual vocabulary keyed by `(language, surface)`.
///
/// Indices are contiguous: all L1 words come first, then all L2 words, each
/// block sorted by descending count (ties by surface). The word vectors of a
/// language are therefore a contiguous block in frequency order.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    lookup: [HashMap<String, usize>; 2],
    total_tokens: [u64; 2],
    t: f64,
    min_count: u64,
}

impl Vocabulary {
    /// Build from already-tokenized, aligned sentence pairs.
    pub fn from_pairs<'a, I>(pairs: I, min_count: u64, t: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut counter = Counter::default();
        for (l1, l2) in pairs {
            counter.add(LanguageId::L1, l1);
            counter.add(LanguageId::L2, l2);
        }
        counter.finish(min_count, t)
    }

    pub(crate) fn from_parts(
        entries: Vec<VocabEntry>,
        total_tokens: [u64; 2],
        t: f64,
        min_count: u64,
    ) -> Result<Self> {
        let mut lookup: [HashMap<String, usize>; 2] = Default::default();
        let mut seen_l2 = false;
        for (idx, e) in entries.iter().enumerate() {
            match e.lang {
                LanguageId::L1 if seen_l2 => {
                    return Err(Error::Malformed("L1 entry after L2 block".into()))
                }
                LanguageId::L2 => seen_l2 = true,
                _ => {}
            }
            if lookup[e.lang.index()].insert(e.surface.clone(), idx).is_some() {
                return Err(Error::Malformed(format!(
                    "duplicate {} entry {:?}",
                    e.lang, e.surface
                )));
            }
        }
        Ok(Vocabulary {
            entries,
            lookup,
            total_tokens,
            t,
            min_count,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    #[inline]
    pub fn entry(&self, idx: usize) -> &VocabEntry {
        &self.entries[idx]
    }

    pub fn lookup(&self, lang: LanguageId, surface: &str) -> Option<usize> {
        self.lookup[lang.index()].get(surface).copied()
    }

    /// Index range holding the words of `lang`.
    pub fn range(&self, lang: LanguageId) -> Range<usize> {
        let n1 = self.lookup[0].len();
        match lang {
            LanguageId::L1 => 0..n1,
            LanguageId::L2 => n1..self.entries.len(),
        }
    }

    pub fn n_words_of(&self, lang: LanguageId) -> usize {
        self.lookup[lang.index()].len()
    }

    pub fn total_tokens(&self, lang: LanguageId) -> u64 {
        self.total_tokens[lang.index()]
    }

    pub fn threshold(&self) -> f64 {
        self.t
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Draw whether occurrence of `idx` is used as a training target.
    #[inline]
    pub fn keep<R: Rng + ?Sized>(&self, idx: usize, rng: &mut R) -> bool {
        let p = self.entries[idx].keep_prob;
        p >= 1.0 || rng.gen::<f64>() < p
    }

    /// Expected number of kept targets over one pass of the corpus.
    pub fn expected_targets(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.count as f64 * e.keep_prob)
            .sum()
    }

    /// Map a whitespace-tokenized sentence to indices, dropping OOV tokens.
    pub fn encode(&self, lang: LanguageId, sentence: &str) -> Vec<usize> {
        let table = &self.lookup[lang.index()];
        sentence
            .split_whitespace()
            .filter_map(|tok| table.get(tok).copied())
            .collect()
    }
}

#[derive(Default)]
struct Counter {
    counts: [HashMap<String, u64>; 2],
    totals: [u64; 2],
}

impl Counter {
    fn add(&mut self, lang: LanguageId, sentence: &str) {
        let map = &mut self.counts[lang.index()];
        for tok in sentence.split_whitespace() {
            self.totals[lang.index()] += 1;
            match map.get_mut(tok) {
                Some(c) => *c += 1,
                None => {
                    map.insert(tok.to_owned(), 1);
                }
            }
        }
    }

    fn finish(self, min_count: u64, t: f64) -> Result<Vocabulary> {
        if self.totals.contains(&0) {
            return Err(Error::EmptyInput("corpus has no tokens on one side"));
        }
        let mut entries = Vec::new();
        for lang in LanguageId::BOTH {
            let total = self.totals[lang.index()];
            let mut words: Vec<(String, u64)> = self.counts[lang.index()]
                .iter()
                .filter(|(_, &c)| c >= min_count.max(1))
                .map(|(w, &c)| (w.clone(), c))
                .collect();
            words.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            entries.extend(words.into_iter().map(|(surface, count)| VocabEntry {
                surface,
                lang,
                count,
                keep_prob: keep_prob(count, total, t),
            }));
        }
        Vocabulary::from_parts(entries, self.totals, t, min_count)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::file(path, e))
}

/// Lock-step reader over two line-aligned files.
pub struct AlignedLines {
    paths: [PathBuf; 2],
    l1: Lines<BufReader<File>>,
    l2: Lines<BufReader<File>>,
    line: usize,
    done: bool,
}

impl AlignedLines {
    pub fn open(l1_path: impl AsRef<Path>, l2_path: impl AsRef<Path>) -> Result<Self> {
        let (p1, p2) = (l1_path.as_ref(), l2_path.as_ref());
        Ok(AlignedLines {
            l1: open(p1)?.lines(),
            l2: open(p2)?.lines(),
            paths: [p1.to_owned(), p2.to_owned()],
            line: 0,
            done: false,
        })
    }

    fn read(&mut self, lang: LanguageId) -> Option<Result<String>> {
        let (lines, path) = match lang {
            LanguageId::L1 => (&mut self.l1, &self.paths[0]),
            LanguageId::L2 => (&mut self.l2, &self.paths[1]),
        };
        lines
            .next()
            .map(|r| r.map_err(|e| Error::file(path.clone(), e)))
    }

    fn count_rest(&mut self, lang: LanguageId) -> Result<usize> {
        let mut n = 0;
        while let Some(line) = self.read(lang) {
            line?;
            n += 1;
        }
        Ok(n)
    }
}

impl Iterator for AlignedLines {
    type Item = Result<(String, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let a = self.read(LanguageId::L1);
        let b = self.read(LanguageId::L2);
        match (a, b) {
            (None, None) => {
                self.done = true;
                None
            }
            (Some(Err(e)), _) | (_, Some(Err(e))) => {
                self.done = true;
                Some(Err(e))
            }
            (Some(Ok(a)), Some(Ok(b))) => {
                self.line += 1;
                Some(Ok((a, b)))
            }
            (Some(Ok(_)), None) => {
                self.done = true;
                let extra = match self.count_rest(LanguageId::L1) {
                    Ok(n) => n,
                    Err(e) => return Some(Err(e)),
                };
                Some(Err(Error::Alignment {
                    l1_lines: self.line + 1 + extra,
                    l2_lines: self.line,
                }))
            }
            (None, Some(Ok(_))) => {
                self.done = true;
                let extra = match self.count_rest(LanguageId::L2) {
                    Ok(n) => n,
                    Err(e) => return Some(Err(e)),
                };
                Some(Err(Error::Alignment {
                    l1_lines: self.line,
                    l2_lines: self.line + 1 + extra,
                }))
            }
        }
    }
}

/// Count the sentence pairs of an aligned corpus.
pub fn count_pairs(l1_path: impl AsRef<Path>, l2_path: impl AsRef<Path>) -> Result<usize> {
    let mut n = 0;
    for pair in AlignedLines::open(l1_path, l2_path)? {
        pair?;
        n += 1;
    }
    Ok(n)
}

pub fn build_vocab(
    l1_path: impl AsRef<Path>,
    l2_path: impl AsRef<Path>,
    min_count: u64,
    t: f64,
) -> Result<Vocabulary> {
    build_vocab_limited(l1_path, l2_path, min_count, t, None)
}

/// Like [`build_vocab`] but counting only the first `max_pairs` pairs. The
/// full files are still checked for alignment.
pub fn build_vocab_limited(
    l1_path: impl AsRef<Path>,
    l2_path: impl AsRef<Path>,
    min_count: u64,
    t: f64,
    max_pairs: Option<usize>,
) -> Result<Vocabulary> {
    let mut counter = Counter::default();
    let limit = max_pairs.unwrap_or(usize::MAX);
    for (i, pair) in AlignedLines::open(l1_path, l2_path)?.enumerate() {
        let (a, b) = pair?;
        if i < limit {
            counter.add(LanguageId::L1, &a);
            counter.add(LanguageId::L2, &b);
        }
    }
    counter.finish(min_count, t)
}

/// An aligned sentence pair as vocabulary indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SentencePair {
    pub l1: Vec<usize>,
    pub l2: Vec<usize>,
}

impl SentencePair {
    pub fn encode(vocab: &Vocabulary, l1: &str, l2: &str) -> Self {
        SentencePair {
            l1: vocab.encode(LanguageId::L1, l1),
            l2: vocab.encode(LanguageId::L2, l2),
        }
    }

    #[inline]
    pub fn side(&self, lang: LanguageId) -> &[usize] {
        match lang {
            LanguageId::L1 => &self.l1,
            LanguageId::L2 => &self.l2,
        }
    }

    /// Either side is empty after OOV filtering; the trainer skips such pairs.
    pub fn skip_eligible(&self) -> bool {
        self.l1.is_empty() || self.l2.is_empty()
    }
}

/// Streaming iterator over encoded sentence pairs, in file order.
pub struct PairStream<'v> {
    lines: AlignedLines,
    vocab: &'v Vocabulary,
    pos: usize,
    end: usize,
}

impl Iterator for PairStream<'_> {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.end {
            return None;
        }
        let item = self.lines.next()?;
        self.pos += 1;
        Some(item.map(|(a, b)| SentencePair::encode(self.vocab, &a, &b)))
    }
}

/// Stream pairs, dropping OOV tokens, stopping after `max_pairs` if given.
pub fn stream_pairs<'v>(
    l1_path: impl AsRef<Path>,
    l2_path: impl AsRef<Path>,
    vocab: &'v Vocabulary,
    max_pairs: Option<usize>,
) -> Result<PairStream<'v>> {
    stream_pair_range(l1_path, l2_path, vocab, 0..max_pairs.unwrap_or(usize::MAX))
}

/// Stream the pairs whose line numbers (0-based) fall in `range`.
pub fn stream_pair_range<'v>(
    l1_path: impl AsRef<Path>,
    l2_path: impl AsRef<Path>,
    vocab: &'v Vocabulary,
    range: Range<usize>,
) -> Result<PairStream<'v>> {
    let mut lines = AlignedLines::open(l1_path, l2_path)?;
    for _ in 0..range.start {
        match lines.next() {
            Some(r) => {
                r?;
            }
            None => break,
        }
    }
    Ok(PairStream {
        lines,
        vocab,
        pos: range.start,
        end: range.end,
    })
}

/// Flat table of word indices whose slot frequencies follow `sqrt(count)`.
#[derive(Clone, Debug)]
pub struct NegativeTable {
    lang: LanguageId,
    slots: Vec<usize>,
    distinct: usize,
}

impl NegativeTable {
    pub fn build(vocab: &Vocabulary, lang: LanguageId, table_size: usize) -> Result<Self> {
        let range = vocab.range(lang);
        if range.is_empty() {
            return Err(Error::NoWords(lang));
        }
        if table_size < range.len() {
            return Err(Error::TableTooSmall {
                lang,
                table_size,
                n_words: range.len(),
            });
        }
        let weights: Vec<f64> = range
            .clone()
            .map(|i| (vocab.entry(i).count as f64).sqrt())
            .collect();
        let seats = apportion(&weights, table_size);
        let mut slots = Vec::with_capacity(table_size);
        for (offset, &n) in seats.iter().enumerate() {
            slots.extend(std::iter::repeat_n(range.start + offset, n));
        }
        debug_assert_eq!(slots.len(), table_size);
        Ok(NegativeTable {
            lang,
            slots,
            distinct: range.len(),
        })
    }

    pub fn lang(&self) -> LanguageId {
        self.lang
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.slots[rng.gen_range(0..self.slots.len())]
    }

    /// Draw `n` indices uniformly over slots, redrawing any equal to `exclude`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        exclude: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(n);
        self.sample_into(n, exclude, rng, &mut out)?;
        Ok(out)
    }

    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        n: usize,
        exclude: usize,
        rng: &mut R,
        out: &mut Vec<usize>,
    ) -> Result<()> {
        out.clear();
        if n == 0 {
            return Ok(());
        }
        if self.distinct == 1 && self.slots[0] == exclude {
            return Err(Error::CannotExclude(exclude));
        }
        while out.len() < n {
            let w = self.draw(rng);
            if w != exclude {
                out.push(w);
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `seats` proportional to `weights`,
/// with every party receiving at least one seat.
fn apportion(weights: &[f64], seats: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| seats as f64 * w / total).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| (q.floor() as usize).max(1)).collect();
    let assigned: usize = alloc.iter().sum();

    if assigned < seats {
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - alloc[a] as f64;
            let rb = quotas[b] - alloc[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle().take(seats - assigned) {
            alloc[i] += 1;
        }
    } else if assigned > seats {
        // Minimum-one seats pushed us over; take back from the most
        // over-represented parties that can spare a seat.
        let mut surplus = assigned - seats;
        while surplus > 0 {
            let i = (0..weights.len())
                .filter(|&i| alloc[i] > 1)
                .max_by(|&a, &b| {
                    let ea = alloc[a] as f64 - quotas[a];
                    let eb = alloc[b] as f64 - quotas[b];
                    ea.total_cmp(&eb).then(b.cmp(&a))
                })
                .expect("seats >= parties");
            alloc[i] -= 1;
            surplus -= 1;
        }
    }
    alloc
}
