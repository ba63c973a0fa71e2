//! Asynchronous SGD over sentence pairs with negative sampling.
//!
//! Every kept target word `w` of either side of a pair produces two binary
//! logistic updates against the output row of `w`:
//!
//! * monolingual: context is the n-grams of the same sentence with that
//!   occurrence of `w` removed (skipped for one-token sentences);
//! * cross-lingual: context is the n-grams of the whole aligned sentence.
//!
//! The context vector is the average of its input rows, so each contributing
//! row receives `grad_ctx / |R|`.

use std::borrow::Borrow;
use std::cell::UnsafeCell;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_vocab_limited, count_pairs, stream_pair_range, stream_pairs, LanguageId, NegativeTable,
    SentencePair, Vocabulary,
};
use crate::error::{Error, Result};
use crate::model::{BilingualModel, EmbeddingMatrices, Matrix};
use crate::ngram::{extract_context_into, NgramConfig};
use crate::scalar::{axpy, dot, Real};

const MAX_SIGMOID: f64 = 8.0;
const SIGMOID_TABLE_SIZE: usize = 512;
const LOG_TABLE_SIZE: usize = 512;
const LOG_EVERY: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to zero.
    pub lr: f64,
    pub negatives: usize,
    pub ngrams: NgramConfig,
    pub min_count: u64,
    /// Subsampling threshold.
    pub t: f64,
    pub threads: usize,
    pub seed: u64,
    pub max_pairs: Option<usize>,
    pub table_size: usize,
    /// Seeded reshuffle of the pair order every epoch (loads pairs in memory).
    pub shuffle: bool,
    /// Use the exact logistic function instead of the clipped lookup table.
    pub exact_sigmoid: bool,
    pub mono_weight: f64,
    pub cross_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            epochs: 5,
            lr: 0.2,
            negatives: 10,
            ngrams: NgramConfig::unigrams(),
            min_count: 5,
            t: 1e-5,
            threads: 1,
            seed: 1,
            max_pairs: None,
            table_size: 10_000_000,
            shuffle: false,
            exact_sigmoid: false,
            mono_weight: 1.0,
            cross_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return bad("lr must be > 0");
        }
        if self.negatives == 0 {
            return bad("negatives must be >= 1");
        }
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        if self.t.is_nan() || self.t <= 0.0 {
            return bad("t must be > 0");
        }
        if self.mono_weight < 0.0 || self.cross_weight < 0.0 {
            return bad("loss weights must be non-negative");
        }
        self.ngrams.validate()
    }
}

/// Learning rate after a fraction `progress` of the planned targets.
pub fn lr_at(progress: f64, lr0: f64) -> f64 {
    (lr0 * (1.0 - progress.clamp(0.0, 1.0))).max(0.0)
}

/// Logistic function and loss, exact or from clipped lookup tables.
#[derive(Clone, Debug)]
pub enum Logistic<T> {
    Exact,
    Table { sigmoid: Vec<T>, log: Vec<T> },
}

impl<T: Real> Logistic<T> {
    pub fn table() -> Self {
        let sigmoid = (0..=SIGMOID_TABLE_SIZE)
            .map(|i| {
                let x = (i as f64 * 2.0 * MAX_SIGMOID) / SIGMOID_TABLE_SIZE as f64 - MAX_SIGMOID;
                T::of(1.0 / (1.0 + (-x).exp()))
            })
            .collect();
        let log = (0..=LOG_TABLE_SIZE)
            .map(|i| T::of(((i as f64 + 1e-5) / LOG_TABLE_SIZE as f64).ln()))
            .collect();
        Logistic::Table { sigmoid, log }
    }

    pub fn for_config(cfg: &TrainConfig) -> Self {
        if cfg.exact_sigmoid {
            Logistic::Exact
        } else {
            Self::table()
        }
    }

    #[inline]
    pub fn sigmoid(&self, x: T) -> T {
        match self {
            Logistic::Exact => T::one() / (T::one() + (-x).exp()),
            Logistic::Table { sigmoid, .. } => {
                let max = T::of(MAX_SIGMOID);
                if x <= -max {
                    T::zero()
                } else if x >= max {
                    T::one()
                } else {
                    let scale = T::of(SIGMOID_TABLE_SIZE as f64 / MAX_SIGMOID / 2.0);
                    let i = ((x + max) * scale).to_usize().unwrap_or(0);
                    sigmoid[i.min(SIGMOID_TABLE_SIZE)]
                }
            }
        }
    }

    /// `log(1 + exp(-x))`
    #[inline]
    pub fn loss(&self, x: T) -> T {
        match self {
            Logistic::Exact => {
                if x > T::zero() {
                    (-x).exp().ln_1p()
                } else {
                    -x + x.exp().ln_1p()
                }
            }
            Logistic::Table { log, .. } => {
                let p = self.sigmoid(x);
                if p >= T::one() {
                    return T::zero();
                }
                let i = (p * T::of(LOG_TABLE_SIZE as f64)).to_usize().unwrap_or(0);
                -log[i.min(LOG_TABLE_SIZE)]
            }
        }
    }
}

/// One negative-sampling logistic step on the output matrix.
///
/// Each output row with label `y` (1 for `target`, 0 for `negs`) gets
/// `g = lr * (y - sigmoid(u . v))` with every score taken before any row
/// moves, so a repeated negative sees the same parameters each time.
/// `grad_ctx` receives `sum g * u`; then each row gets `u += g * v`.
/// Returns the summed logistic loss.
pub fn binary_logistic_update_into<T: Real>(
    ctx_vec: &[T],
    target: usize,
    negs: &[usize],
    lr: T,
    output: &mut Matrix<T>,
    logistic: &Logistic<T>,
    grad_ctx: &mut [T],
) -> Result<T> {
    grad_ctx.iter_mut().for_each(|g| *g = T::zero());
    let mut loss = T::zero();
    let mut coeffs = Vec::with_capacity(negs.len() + 1);
    let labelled = std::iter::once((target, true)).chain(negs.iter().map(|&n| (n, false)));
    for (row, positive) in labelled.clone() {
        let u = output.row(row);
        let score = dot(u, ctx_vec);
        if !score.is_finite() {
            return Err(Error::NumericOverflow(score.as_f64()));
        }
        let (label, signed) = if positive {
            (T::one(), score)
        } else {
            (T::zero(), -score)
        };
        loss += logistic.loss(signed);
        let g = lr * (label - logistic.sigmoid(score));
        axpy(g, u, grad_ctx);
        coeffs.push(g);
    }
    for ((row, _), g) in labelled.zip(coeffs) {
        axpy(g, ctx_vec, output.row_mut(row));
    }
    Ok(loss)
}

pub fn binary_logistic_update<T: Real>(
    ctx_vec: &[T],
    target: usize,
    negs: &[usize],
    lr: T,
    output: &mut Matrix<T>,
    logistic: &Logistic<T>,
) -> Result<(T, Vec<T>)> {
    let mut grad = vec![T::zero(); ctx_vec.len()];
    let loss = binary_logistic_update_into(ctx_vec, target, negs, lr, output, logistic, &mut grad)?;
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateKind {
    Monolingual,
    CrossLingual,
}

/// A fully sampled update: target, context rows, and negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedUpdate {
    pub kind: UpdateKind,
    pub target: usize,
    pub context: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Per-language negative tables.
#[derive(Clone, Debug)]
pub struct NegativeTables([NegativeTable; 2]);

impl NegativeTables {
    pub fn build(vocab: &Vocabulary, table_size: usize) -> Result<Self> {
        Ok(NegativeTables([
            NegativeTable::build(vocab, LanguageId::L1, table_size)?,
            NegativeTable::build(vocab, LanguageId::L2, table_size)?,
        ]))
    }

    pub fn get(&self, lang: LanguageId) -> &NegativeTable {
        &self.0[lang.index()]
    }
}

/// Scratch buffers reused across updates.
#[derive(Default)]
struct Scratch {
    reduced: Vec<usize>,
    context: Vec<usize>,
    negatives: Vec<usize>,
}

/// Walk the sampled updates of one pair in training order, handing each to
/// `f` as `(kind, target, context, negatives)`. Returns the number of kept
/// targets. Randomness is drawn in a fixed order, so the sequence depends
/// only on the rng state.
fn visit_updates<R, F>(
    pair: &SentencePair,
    vocab: &Vocabulary,
    tables: &NegativeTables,
    cfg: &TrainConfig,
    rng: &mut R,
    scratch: &mut Scratch,
    mut f: F,
) -> Result<u64>
where
    R: Rng + ?Sized,
    F: FnMut(UpdateKind, usize, &[usize], &[usize]) -> Result<()>,
{
    if pair.skip_eligible() {
        return Ok(0);
    }
    let n_words = vocab.len();
    let mut kept = 0;
    for lang in LanguageId::BOTH {
        let own = pair.side(lang);
        let other = pair.side(lang.other());
        let table = tables.get(lang);
        for (pos, &target) in own.iter().enumerate() {
            if !vocab.keep(target, rng) {
                continue;
            }
            kept += 1;
            if own.len() > 1 {
                scratch.reduced.clear();
                scratch.reduced.extend_from_slice(&own[..pos]);
                scratch.reduced.extend_from_slice(&own[pos + 1..]);
                extract_context_into(
                    &scratch.reduced,
                    lang,
                    &cfg.ngrams,
                    n_words,
                    Some(&mut *rng),
                    &mut scratch.context,
                )?;
                table.sample_into(cfg.negatives, target, rng, &mut scratch.negatives)?;
                f(
                    UpdateKind::Monolingual,
                    target,
                    &scratch.context,
                    &scratch.negatives,
                )?;
            }
            extract_context_into(
                other,
                lang.other(),
                &cfg.ngrams,
                n_words,
                Some(&mut *rng),
                &mut scratch.context,
            )?;
            table.sample_into(cfg.negatives, target, rng, &mut scratch.negatives)?;
            f(
                UpdateKind::CrossLingual,
                target,
                &scratch.context,
                &scratch.negatives,
            )?;
        }
    }
    Ok(kept)
}

/// Sample the updates `step_pair` would perform, without touching parameters.
pub fn plan_pair<R: Rng + ?Sized>(
    pair: &SentencePair,
    vocab: &Vocabulary,
    tables: &NegativeTables,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<PlannedUpdate>> {
    let mut plan = Vec::new();
    visit_updates(
        pair,
        vocab,
        tables,
        cfg,
        rng,
        &mut Scratch::default(),
        |kind, target, context, negatives| {
            plan.push(PlannedUpdate {
                kind,
                target,
                context: context.to_vec(),
                negatives: negatives.to_vec(),
            });
            Ok(())
        },
    )?;
    Ok(plan)
}

/// Applies updates to a set of matrices; owns the per-thread buffers.
pub struct Updater<T> {
    logistic: Logistic<T>,
    mono_weight: T,
    cross_weight: T,
    ctx_vec: Vec<T>,
    grad: Vec<T>,
}

impl<T: Real> Updater<T> {
    pub fn new(cfg: &TrainConfig) -> Self {
        Updater {
            logistic: Logistic::for_config(cfg),
            mono_weight: T::of(cfg.mono_weight),
            cross_weight: T::of(cfg.cross_weight),
            ctx_vec: vec![T::zero(); cfg.dim],
            grad: vec![T::zero(); cfg.dim],
        }
    }

    pub fn logistic(&self) -> &Logistic<T> {
        &self.logistic
    }

    /// One update; returns its (weighted) loss.
    pub fn apply(
        &mut self,
        m: &mut EmbeddingMatrices<T>,
        kind: UpdateKind,
        target: usize,
        context: &[usize],
        negatives: &[usize],
        lr: T,
    ) -> Result<T> {
        let weight = match kind {
            UpdateKind::Monolingual => self.mono_weight,
            UpdateKind::CrossLingual => self.cross_weight,
        };
        m.compose_into(context, &mut self.ctx_vec)?;
        let loss = binary_logistic_update_into(
            &self.ctx_vec,
            target,
            negatives,
            lr * weight,
            &mut m.output,
            &self.logistic,
            &mut self.grad,
        )?;
        let scale = T::one() / T::of(context.len() as f64);
        for &row in context {
            axpy(scale, &self.grad, m.input.row_mut(row));
        }
        Ok(loss * weight)
    }

    pub fn apply_plan(
        &mut self,
        m: &mut EmbeddingMatrices<T>,
        plan: &[PlannedUpdate],
        lr: T,
    ) -> Result<T> {
        let mut loss = T::zero();
        for u in plan {
            loss += self.apply(m, u.kind, u.target, &u.context, &u.negatives, lr)?;
        }
        Ok(loss)
    }
}

/// Outcome of one [`step_pair`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub updates: u64,
    pub kept_targets: u64,
}

/// Sample and apply all updates of one sentence pair at learning rate `lr`.
#[allow(clippy::too_many_arguments)]
pub fn step_pair<T: Real, R: Rng + ?Sized>(
    pair: &SentencePair,
    m: &mut EmbeddingMatrices<T>,
    vocab: &Vocabulary,
    tables: &NegativeTables,
    cfg: &TrainConfig,
    lr: f64,
    rng: &mut R,
    updater: &mut Updater<T>,
) -> Result<StepStats> {
    let mut scratch = Scratch::default();
    step_pair_with(pair, m, vocab, tables, cfg, lr, rng, updater, &mut scratch)
}

#[allow(clippy::too_many_arguments)]
fn step_pair_with<T: Real, R: Rng + ?Sized>(
    pair: &SentencePair,
    m: &mut EmbeddingMatrices<T>,
    vocab: &Vocabulary,
    tables: &NegativeTables,
    cfg: &TrainConfig,
    lr: f64,
    rng: &mut R,
    updater: &mut Updater<T>,
    scratch: &mut Scratch,
) -> Result<StepStats> {
    let lr = T::of(lr);
    let mut stats = StepStats::default();
    stats.kept_targets = visit_updates(pair, vocab, tables, cfg, rng, scratch, |k, t, c, n| {
        stats.loss += updater.apply(m, k, t, c, n, lr)?.as_f64();
        stats.updates += 1;
        Ok(())
    })?;
    Ok(stats)
}

/// Matrices shared by Hogwild workers.
///
/// Workers read and write rows without synchronization; lost or torn
/// updates are tolerated. Only [`Trainer`] hands out references.
struct SharedMatrices<T>(UnsafeCell<EmbeddingMatrices<T>>);

// SAFETY: concurrent row access is the Hogwild contract; element types are
// plain floats with no invariants that a torn write could break.
unsafe impl<T: Send> Sync for SharedMatrices<T> {}

impl<T> SharedMatrices<T> {
    /// # Safety
    /// Callers must accept racy reads and writes from other workers.
    #[allow(clippy::mut_from_ref)]
    unsafe fn get(&self) -> &mut EmbeddingMatrices<T> {
        &mut *self.0.get()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// Average loss per update, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub targets: u64,
    pub updates: u64,
    pub skipped_pairs: u64,
    pub pairs_per_epoch: usize,
}

struct Progress {
    processed: AtomicU64,
    total: f64,
    lr0: f64,
}

impl Progress {
    fn lr(&self) -> f64 {
        let done = self.processed.load(Ordering::Relaxed) as f64;
        lr_at((done / self.total).min(1.0), self.lr0)
    }

    fn fraction(&self) -> f64 {
        (self.processed.load(Ordering::Relaxed) as f64 / self.total).clamp(0.0, 1.0)
    }
}

#[derive(Default)]
struct WorkerTotals {
    loss: f64,
    updates: u64,
    targets: u64,
    skipped: u64,
}

/// Where training pairs come from.
enum PairSource<'a> {
    Files { l1: &'a Path, l2: &'a Path },
    Memory(&'a [SentencePair]),
}

pub struct Trainer<'a, T> {
    cfg: &'a TrainConfig,
    vocab: &'a Vocabulary,
    tables: NegativeTables,
    shared: SharedMatrices<T>,
}

impl<'a, T: Real> Trainer<'a, T> {
    pub fn new(vocab: &'a Vocabulary, cfg: &'a TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            cfg,
            vocab,
            tables: NegativeTables::build(vocab, cfg.table_size)?,
            shared: SharedMatrices(UnsafeCell::new(EmbeddingMatrices::for_vocab(vocab, cfg))),
        })
    }

    pub fn tables(&self) -> &NegativeTables {
        &self.tables
    }

    pub fn into_matrices(self) -> EmbeddingMatrices<T> {
        self.shared.0.into_inner()
    }

    pub fn train_files(&mut self, l1: &Path, l2: &Path) -> Result<TrainReport> {
        let n = count_pairs(l1, l2)?;
        let n = self.cfg.max_pairs.map_or(n, |m| m.min(n));
        if self.cfg.shuffle {
            let pairs = stream_pairs(l1, l2, self.vocab, Some(n))?.collect::<Result<Vec<_>>>()?;
            self.run(PairSource::Memory(&pairs), n)
        } else {
            self.run(PairSource::Files { l1, l2 }, n)
        }
    }

    pub fn train_pairs(&mut self, pairs: &[SentencePair]) -> Result<TrainReport> {
        let n = self.cfg.max_pairs.map_or(pairs.len(), |m| m.min(pairs.len()));
        self.run(PairSource::Memory(&pairs[..n]), n)
    }

    fn run(&self, source: PairSource<'_>, n_pairs: usize) -> Result<TrainReport> {
        let cfg = self.cfg;
        let progress = Progress {
            processed: AtomicU64::new(0),
            total: (cfg.epochs as f64 * self.vocab.expected_targets()).max(1.0),
            lr0: cfg.lr,
        };
        let mut report = TrainReport {
            pairs_per_epoch: n_pairs,
            ..TrainReport::default()
        };
        let mut order: Vec<usize> = (0..n_pairs).collect();

        for epoch in 0..cfg.epochs {
            if cfg.shuffle {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(u64::MAX - epoch as u64);
                order.shuffle(&mut rng);
            }
            let threads = cfg.threads.min(n_pairs.max(1));
            let chunks: Vec<_> = (0..threads)
                .map(|k| (k * n_pairs / threads)..((k + 1) * n_pairs / threads))
                .collect();
            let results: Vec<Result<WorkerTotals>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunks
                    .iter()
                    .enumerate()
                    .map(|(k, range)| {
                        let stream = 1 + (epoch * threads + k) as u64;
                        let (progress, source, order) = (&progress, &source, &order);
                        let range = range.clone();
                        scope.spawn(move || -> Result<WorkerTotals> {
                            match source {
                                PairSource::Files { l1, l2 } => {
                                    let it = stream_pair_range(l1, l2, self.vocab, range)?;
                                    self.worker(it, stream, progress)
                                }
                                PairSource::Memory(pairs) => {
                                    let it = order[range].iter().map(|&i| Ok(&pairs[i]));
                                    self.worker(it, stream, progress)
                                }
                            }
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            });

            let mut epoch_loss = 0.0;
            let mut epoch_updates = 0;
            for r in results {
                let w = r?;
                epoch_loss += w.loss;
                epoch_updates += w.updates;
                report.targets += w.targets;
                report.skipped_pairs += w.skipped;
            }
            report.updates += epoch_updates;
            let avg = epoch_loss / epoch_updates.max(1) as f64;
            info!(
                "epoch {}/{}: avg loss {:.6} over {} updates",
                epoch + 1,
                cfg.epochs,
                avg,
                epoch_updates
            );
            report.epoch_losses.push(avg);
        }
        Ok(report)
    }

    fn worker<I, P>(&self, pairs: I, stream: u64, progress: &Progress) -> Result<WorkerTotals>
    where
        I: Iterator<Item = Result<P>>,
        P: Borrow<SentencePair>,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        let mut updater = Updater::new(self.cfg);
        let mut scratch = Scratch::default();
        let mut totals = WorkerTotals::default();
        let (mut window_loss, mut window_updates) = (0.0, 0u64);
        // SAFETY: Hogwild; see `SharedMatrices`.
        let m = unsafe { self.shared.get() };

        for pair in pairs {
            let pair = pair?;
            let pair = pair.borrow();
            if pair.skip_eligible() {
                totals.skipped += 1;
                continue;
            }
            let lr = progress.lr();
            let stats = step_pair_with(
                pair,
                m,
                self.vocab,
                &self.tables,
                self.cfg,
                lr,
                &mut rng,
                &mut updater,
                &mut scratch,
            )?;
            totals.loss += stats.loss;
            totals.updates += stats.updates;
            totals.targets += stats.kept_targets;
            window_loss += stats.loss;
            window_updates += stats.updates;

            let before = progress
                .processed
                .fetch_add(stats.kept_targets, Ordering::Relaxed);
            if (before + stats.kept_targets) / LOG_EVERY > before / LOG_EVERY {
                info!(
                    "progress {:5.1}%  lr {:.6}  loss {:.6}",
                    100.0 * progress.fraction(),
                    lr,
                    window_loss / window_updates.max(1) as f64
                );
                window_loss = 0.0;
                window_updates = 0;
            }
        }
        Ok(totals)
    }
}

/// Result of [`train`].
pub struct TrainOutput<T> {
    pub model: BilingualModel<T>,
    pub report: TrainReport,
}

/// Build the vocabulary from the (possibly truncated) corpus and train.
pub fn train<T: Real>(
    l1: impl AsRef<Path>,
    l2: impl AsRef<Path>,
    cfg: &TrainConfig,
) -> Result<TrainOutput<T>> {
    cfg.validate()?;
    let (l1, l2) = (l1.as_ref(), l2.as_ref());
    let vocab = build_vocab_limited(l1, l2, cfg.min_count, cfg.t, cfg.max_pairs)?;
    let mut trainer = Trainer::<T>::new(&vocab, cfg)?;
    let report = trainer.train_files(l1, l2)?;
    let matrices = trainer.into_matrices();
    Ok(TrainOutput {
        model: BilingualModel {
            config: cfg.clone(),
            vocab,
            matrices,
        },
        report,
    })
}

/// Train on pairs already in memory against an existing vocabulary.
pub fn train_pairs<T: Real>(
    vocab: Vocabulary,
    pairs: &[SentencePair],
    cfg: &TrainConfig,
) -> Result<TrainOutput<T>> {
    let mut trainer = Trainer::<T>::new(&vocab, cfg)?;
    let report = trainer.train_pairs(pairs)?;
    let matrices = trainer.into_matrices();
    Ok(TrainOutput {
        model: BilingualModel {
            config: cfg.clone(),
            vocab,
            matrices,
        },
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn lr_schedule() {
        assert_eq!(lr_at(0.0, 0.2), 0.2);
        assert!((lr_at(0.5, 0.2) - 0.1).abs() < 1e-15);
        assert_eq!(lr_at(1.0, 0.2), 0.0);
        assert_eq!(lr_at(1.5, 0.2), 0.0);
    }

    #[test]
    fn table_matches_exact_within_resolution() {
        let table = Logistic::<f64>::table();
        for i in -100..=100 {
            let x = i as f64 * 0.07;
            let exact = Logistic::<f64>::Exact.sigmoid(x);
            assert!((table.sigmoid(x) - exact).abs() < 0.01, "{x}");
        }
        assert_eq!(table.sigmoid(9.0), 1.0);
        assert_eq!(table.sigmoid(-9.0), 0.0);
        assert_eq!(table.loss(20.0), 0.0);
    }

    #[test]
    fn exact_loss_is_stable() {
        let l = Logistic::<f64>::Exact;
        assert!((l.loss(0.0) - LN2).abs() < 1e-15);
        assert!(l.loss(800.0).abs() < 1e-300);
        assert!((l.loss(-800.0) - 800.0).abs() < 1e-9);
    }

    fn output_with(rows: usize, dim: usize, values: &[f64]) -> Matrix<f64> {
        let mut m = Matrix::zeros(rows, dim);
        m.as_mut_slice()[..values.len()].copy_from_slice(values);
        m
    }

    #[test]
    fn zero_score_positive_update() {
        let mut out = Matrix::<f64>::zeros(2, 2);
        let v = [1.0, -2.0];
        let (loss, grad) =
            binary_logistic_update(&v, 0, &[], 0.1, &mut out, &Logistic::Exact).unwrap();
        assert!((loss - LN2).abs() < 1e-12);
        assert_eq!(grad, vec![0.0, 0.0]);
        // g = 0.5 * lr, so u = 0.05 * v
        assert!((out.row(0)[0] - 0.05).abs() < 1e-15);
        assert!((out.row(0)[1] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_context_changes_nothing() {
        let mut out = Matrix::<f64>::zeros(4, 3);
        let before = out.clone();
        let (loss, grad) =
            binary_logistic_update(&[0.0; 3], 0, &[1, 2, 3], 0.5, &mut out, &Logistic::Exact)
                .unwrap();
        assert!((loss - 4.0 * LN2).abs() < 1e-12);
        assert_eq!(grad, vec![0.0; 3]);
        assert_eq!(out, before);
    }

    #[test]
    fn grad_uses_pre_update_rows() {
        let mut out = output_with(2, 1, &[1.0, 2.0]);
        let v = [0.5];
        let lr = 0.3;
        let (_, grad) =
            binary_logistic_update(&v, 0, &[1], lr, &mut out, &Logistic::Exact).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let g_pos = lr * (1.0 - sig(0.5));
        let g_neg = lr * (0.0 - sig(1.0));
        assert!((grad[0] - (g_pos * 1.0 + g_neg * 2.0)).abs() < 1e-15);
        assert!((out.row(0)[0] - (1.0 + g_pos * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn overflow_is_reported() {
        let mut out = output_with(1, 1, &[f64::INFINITY]);
        let res = binary_logistic_update(&[1.0], 0, &[], 0.1, &mut out, &Logistic::Exact);
        assert!(matches!(res, Err(Error::NumericOverflow(_))));
    }

    #[test]
    fn loss_vanishes_for_confident_positive() {
        let mut out = output_with(1, 1, &[1e3]);
        let (loss, _) =
            binary_logistic_update(&[1.0], 0, &[], 0.0, &mut out, &Logistic::Exact).unwrap();
        assert!(loss < 1e-300);
    }

    fn toy_vocab() -> Vocabulary {
        Vocabulary::from_pairs(
            [("a b c", "x y z"), ("a", "x"), ("b c", "y z")],
            1,
            1.0,
        )
        .unwrap()
    }

    fn cfg(dim: usize) -> TrainConfig {
        TrainConfig {
            dim,
            negatives: 2,
            t: 1.0,
            min_count: 1,
            table_size: 64,
            exact_sigmoid: true,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_token_pair_only_cross_updates() {
        let v = toy_vocab();
        let c = cfg(4);
        let tables = NegativeTables::build(&v, c.table_size).unwrap();
        let pair = SentencePair::encode(&v, "a", "x");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = plan_pair(&pair, &v, &tables, &c, &mut rng).unwrap();
        assert_eq!(plan.len(), 2);
        assert!(plan.iter().all(|u| u.kind == UpdateKind::CrossLingual));
        assert!(plan.iter().all(|u| !u.negatives.contains(&u.target)));
    }

    #[test]
    fn plan_structure() {
        let v = toy_vocab();
        let c = cfg(4);
        let tables = NegativeTables::build(&v, c.table_size).unwrap();
        let pair = SentencePair::encode(&v, "a b c", "x y");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = plan_pair(&pair, &v, &tables, &c, &mut rng).unwrap();
        // keep_prob is 1 with t = 1; 5 targets, each mono + cross
        assert_eq!(plan.len(), 10);
        let a = v.lookup(LanguageId::L1, "a").unwrap();
        let mono_a = &plan[0];
        assert_eq!(mono_a.kind, UpdateKind::Monolingual);
        assert_eq!(mono_a.target, a);
        assert!(!mono_a.context.contains(&a));
        assert_eq!(plan[1].context, pair.l2);
        for u in &plan {
            let lang = v.entry(u.target).lang;
            assert!(u.negatives.iter().all(|&n| v.entry(n).lang == lang));
        }
    }

    #[test]
    fn skipped_pairs_do_nothing() {
        let v = toy_vocab();
        let c = cfg(4);
        let tables = NegativeTables::build(&v, c.table_size).unwrap();
        let pair = SentencePair::encode(&v, "a", "unknown");
        let mut m = EmbeddingMatrices::<f64>::for_vocab(&v, &c);
        let before = m.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stats = step_pair(&pair, &mut m, &v, &tables, &c, 0.1, &mut rng, &mut Updater::new(&c))
            .unwrap();
        assert_eq!(stats, StepStats::default());
        assert_eq!(m, before);
    }

    #[test]
    fn input_rows_receive_averaged_gradient() {
        let v = toy_vocab();
        let c = cfg(3);
        let mut m = EmbeddingMatrices::<f64>::for_vocab(&v, &c);
        for (i, x) in m.output.as_mut_slice().iter_mut().enumerate() {
            *x = ((i * 7 % 11) as f64 - 5.0) * 0.1;
        }
        let before = m.clone();
        let mut updater = Updater::new(&c);
        let ctx = [0usize, 1, 2];
        let target = 3;
        let negs = [4usize];

        let mut v_ctx = vec![0.0; 3];
        before.compose_into(&ctx, &mut v_ctx).unwrap();
        let mut out = before.output.clone();
        let (_, grad) =
            binary_logistic_update(&v_ctx, target, &negs, 0.05, &mut out, &Logistic::Exact)
                .unwrap();

        updater
            .apply(&mut m, UpdateKind::CrossLingual, target, &ctx, &negs, 0.05)
            .unwrap();
        for &r in &ctx {
            let delta: Vec<f64> = m
                .input
                .row(r)
                .iter()
                .zip(before.input.row(r))
                .map(|(a, b)| a - b)
                .collect();
            let expected = crate::scalar::norm(&grad) / 3.0;
            assert!((crate::scalar::norm(&delta) - expected).abs() < 1e-15);
        }
        assert_eq!(m.output, out);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { negatives: 0, ..TrainConfig::default() },
            TrainConfig { threads: 0, ..TrainConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn single_thread_training_is_deterministic() {
        let v = toy_vocab();
        let pairs: Vec<_> = [("a b c", "x y z"), ("a b", "x y"), ("c a", "z x")]
            .iter()
            .map(|(a, b)| SentencePair::encode(&v, a, b))
            .collect();
        let c = TrainConfig {
            epochs: 3,
            exact_sigmoid: false,
            ..cfg(8)
        };
        let a = train_pairs::<f32>(v.clone(), &pairs, &c).unwrap();
        let b = train_pairs::<f32>(v, &pairs, &c).unwrap();
        assert_eq!(a.model.matrices, b.model.matrices);
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.epoch_losses.len(), 3);
    }
}
