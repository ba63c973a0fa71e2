//! Zero-shot document classification on top of the shared embedding space.
//!
//! Documents are embedded as the sum of their sentence embeddings, fed to a
//! feed-forward network with hidden layers of 10 and 8 ReLU units and a
//! softmax output, trained with Adam on one language and applied unchanged
//! to the other.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::LanguageId;
use crate::error::{Error, Result};
use crate::model::BilingualModel;
use crate::scalar::Real;

pub const HIDDEN1: usize = 10;
pub const HIDDEN2: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledDocument {
    pub sentences: Vec<String>,
    pub label: usize,
}

/// Blocks separated by blank lines; the first line of a block is the integer
/// label, the remaining lines are tokenized sentences.
pub fn read_documents<R: BufRead>(r: R, name: &str) -> Result<Vec<LabeledDocument>> {
    let mut docs = Vec::new();
    let mut current: Option<LabeledDocument> = None;
    let mut header_line = 0;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            if let Some(doc) = current.take() {
                if doc.sentences.is_empty() {
                    return Err(Error::parse(name, header_line, "document has no sentences"));
                }
                docs.push(doc);
            }
            continue;
        }
        match current.as_mut() {
            None => {
                let label = line.trim().parse::<usize>().map_err(|_| {
                    Error::parse(name, lineno, format!("expected integer label, found {line:?}"))
                })?;
                header_line = lineno;
                current = Some(LabeledDocument {
                    sentences: Vec::new(),
                    label,
                });
            }
            Some(doc) => doc.sentences.push(line.trim().to_owned()),
        }
    }
    if let Some(doc) = current {
        if doc.sentences.is_empty() {
            return Err(Error::parse(name, header_line, "document has no sentences"));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_documents_file(path: impl AsRef<Path>) -> Result<Vec<LabeledDocument>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_documents(BufReader::new(f), &path.display().to_string())
}

/// Sum of the averaged n-gram embeddings of the document's sentences.
/// Sentences without known tokens are skipped.
pub fn doc_embed<T: Real>(
    doc: &LabeledDocument,
    model: &BilingualModel<T>,
    lang: LanguageId,
) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); model.dim()];
    let mut any = false;
    for s in &doc.sentences {
        match model.embed_sentence(lang, s) {
            Ok(v) => {
                any = true;
                out.iter_mut().zip(&v).for_each(|(o, &x)| *o += x);
            }
            Err(Error::AllOov) => continue,
            Err(e) => return Err(e),
        }
    }
    if !any {
        return Err(Error::AllOov);
    }
    Ok(out)
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Layer<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    fn forward(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, &b)| b + crate::scalar::dot(row, x)),
        );
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams<T> {
    pub layers: [Layer<T>; 3],
}

impl<T: Real> MlpParams<T> {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        MlpParams {
            layers: [
                Layer::zeros(dim, HIDDEN1),
                Layer::zeros(HIDDEN1, HIDDEN2),
                Layer::zeros(HIDDEN2, classes),
            ],
        }
    }

    /// He-uniform weights, zero biases.
    pub fn init(dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(dim, classes);
        for layer in p.layers.iter_mut() {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut() {
                *w = T::of(rng.gen_range(-bound..bound));
            }
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers[2].outputs
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        self.activations(x).probs
    }

    pub fn predict(&self, x: &[T]) -> usize {
        let p = self.forward(x);
        let mut best = 0;
        for (i, &q) in p.iter().enumerate() {
            if q > p[best] {
                best = i;
            }
        }
        best
    }

    fn activations(&self, x: &[T]) -> Activations<T> {
        let mut h1 = Vec::new();
        self.layers[0].forward(x, &mut h1);
        relu(&mut h1);
        let mut h2 = Vec::new();
        self.layers[1].forward(&h1, &mut h2);
        relu(&mut h2);
        let mut logits = Vec::new();
        self.layers[2].forward(&h2, &mut logits);
        Activations {
            h1,
            h2,
            probs: softmax(&logits),
        }
    }

    /// Cross-entropy loss of one example; gradients are added into `grads`.
    pub fn backward(&self, x: &[T], label: usize, grads: &mut MlpParams<T>) -> T {
        let a = self.activations(x);
        let loss = -a.probs[label].max(T::min_positive_value()).ln();

        let mut delta3 = a.probs.clone();
        delta3[label] -= T::one();
        let delta2 = backprop_layer(&self.layers[2], &mut grads.layers[2], &a.h2, &delta3);
        let delta2 = relu_mask(delta2, &a.h2);
        let delta1 = backprop_layer(&self.layers[1], &mut grads.layers[1], &a.h1, &delta2);
        let delta1 = relu_mask(delta1, &a.h1);
        backprop_layer(&self.layers[0], &mut grads.layers[0], x, &delta1);
        loss
    }

    /// Mean cross-entropy over a set of examples.
    pub fn loss(&self, examples: &[(Vec<T>, usize)]) -> T {
        let total: T = examples
            .iter()
            .map(|(x, y)| -self.forward(x)[*y].max(T::min_positive_value()).ln())
            .sum();
        total / T::of(examples.len().max(1) as f64)
    }
}

impl<T: Real + Serialize + DeserializeOwned> MlpParams<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::file(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)
            .map_err(|e| Error::Malformed(format!("classifier: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::file(path, e))?;
        let p: Self = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Error::Malformed(format!("classifier {}: {e}", path.display())))?;
        p.check_shapes()?;
        Ok(p)
    }
}

impl<T> MlpParams<T> {
    fn check_shapes(&self) -> Result<()> {
        let [a, b, c] = &self.layers;
        let chained = a.outputs == HIDDEN1 && b.inputs == HIDDEN1 && b.outputs == HIDDEN2 && c.inputs == HIDDEN2;
        let sized = self
            .layers
            .iter()
            .all(|l| l.weights.len() == l.inputs * l.outputs && l.bias.len() == l.outputs);
        if chained && sized && a.inputs > 0 && c.outputs > 0 {
            Ok(())
        } else {
            Err(Error::Malformed("classifier layer shapes".into()))
        }
    }
}

struct Activations<T> {
    h1: Vec<T>,
    h2: Vec<T>,
    probs: Vec<T>,
}

fn relu<T: Real>(v: &mut [T]) {
    v.iter_mut().for_each(|x| *x = x.max(T::zero()));
}

fn relu_mask<T: Real>(mut delta: Vec<T>, activated: &[T]) -> Vec<T> {
    for (d, &a) in delta.iter_mut().zip(activated) {
        if a <= T::zero() {
            *d = T::zero();
        }
    }
    delta
}

/// Accumulate weight/bias gradients for `delta` at the layer output and
/// return the gradient with respect to the layer input.
fn backprop_layer<T: Real>(layer: &Layer<T>, grad: &mut Layer<T>, input: &[T], delta: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); layer.inputs];
    for (o, &d) in delta.iter().enumerate() {
        grad.bias[o] += d;
        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
        let grow = &mut grad.weights[o * layer.inputs..(o + 1) * layer.inputs];
        for i in 0..layer.inputs {
            grow[i] += d * input[i];
            dx[i] += d * row[i];
        }
    }
    dx
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step: u64,
    first: Vec<T>,
    second: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize) -> Self {
        Self::with_hyper(n_params, T::of(1e-3), T::of(0.9), T::of(0.999), T::of(1e-8))
    }

    pub fn with_hyper(n_params: usize, lr: T, beta1: T, beta2: T, eps: T) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: vec![T::zero(); n_params],
            second: vec![T::zero(); n_params],
        }
    }
}

/// Bias-corrected Adam update of `params` with `grads`.
pub fn adam_step<T: Real>(params: &mut MlpParams<T>, grads: &MlpParams<T>, s: &mut AdamState<T>) {
    assert_eq!(params.n_params(), s.first.len(), "optimizer state shape");
    s.step += 1;
    let t = s.step as i32;
    let c1 = T::one() - s.beta1.powi(t);
    let c2 = T::one() - s.beta2.powi(t);
    let moments = s.first.iter_mut().zip(s.second.iter_mut());
    for ((p, &g), (m, v)) in params.iter_mut().zip(grads.iter()).zip(moments) {
        *m = s.beta1 * *m + (T::one() - s.beta1) * g;
        *v = s.beta2 * *v + (T::one() - s.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= s.lr * m_hat / (v_hat.sqrt() + s.eps);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    /// Epochs without a training loss improvement of at least `min_delta`
    /// before stopping; 0 disables early stopping.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        ClassifierOptions {
            epochs: 50,
            batch_size: 16,
            seed: 1,
            lr: 1e-3,
            patience: 5,
            min_delta: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub epoch_losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Mini-batch Adam on mean cross-entropy.
pub fn fit<T: Real>(
    examples: &[(Vec<T>, usize)],
    classes: usize,
    opts: &ClassifierOptions,
) -> Result<(MlpParams<T>, FitReport)> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("no training documents"));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be >= 1".into()));
    }
    let dim = examples[0].0.len();
    if let Some((x, _)) = examples.iter().find(|(x, _)| x.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            found: x.len(),
        });
    }
    if let Some((_, y)) = examples.iter().find(|(_, y)| *y >= classes) {
        return Err(Error::InvalidConfig(format!(
            "label {y} out of range for {classes} classes"
        )));
    }

    let mut params = MlpParams::init(dim, classes, opts.seed);
    let mut adam = AdamState::with_hyper(
        params.n_params(),
        T::of(opts.lr),
        T::of(0.9),
        T::of(0.999),
        T::of(1e-8),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = FitReport {
        epoch_losses: Vec::new(),
        stopped_early: false,
    };
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let mut grads = MlpParams::zeros(dim, classes);
            for &i in batch {
                let (x, y) = &examples[i];
                epoch_loss += params.backward(x, *y, &mut grads).as_f64();
            }
            let scale = T::one() / T::of(batch.len() as f64);
            grads.iter_mut().for_each(|g| *g *= scale);
            adam_step(&mut params, &grads, &mut adam);
        }
        let epoch_loss = epoch_loss / examples.len() as f64;
        report.epoch_losses.push(epoch_loss);

        if opts.patience > 0 {
            if epoch_loss < best - opts.min_delta {
                best = epoch_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= opts.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok((params, report))
}

/// Train on documents of one language only.
pub fn train_classifier<T: Real>(
    docs: &[LabeledDocument],
    model: &BilingualModel<T>,
    lang: LanguageId,
    opts: &ClassifierOptions,
) -> Result<(MlpParams<T>, FitReport)> {
    let mut examples = Vec::with_capacity(docs.len());
    for doc in docs {
        match doc_embed(doc, model, lang) {
            Ok(x) => examples.push((x, doc.label)),
            Err(Error::AllOov) => continue,
            Err(e) => return Err(e),
        }
    }
    let classes = docs.iter().map(|d| d.label + 1).max().unwrap_or(0);
    fit(&examples, classes, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassifierEval {
    pub accuracy: f64,
    pub documents: usize,
    /// Documents without known tokens, counted as errors.
    pub oov_documents: usize,
}

pub fn evaluate_classifier<T: Real>(
    params: &MlpParams<T>,
    docs: &[LabeledDocument],
    model: &BilingualModel<T>,
    lang: LanguageId,
) -> Result<ClassifierEval> {
    if docs.is_empty() {
        return Err(Error::EmptyInput("no test documents"));
    }
    let mut correct = 0;
    let mut oov = 0;
    for doc in docs {
        match doc_embed(doc, model, lang) {
            Ok(x) => {
                if params.predict(&x) == doc.label {
                    correct += 1;
                }
            }
            Err(Error::AllOov) => oov += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(ClassifierEval {
        accuracy: correct as f64 / docs.len() as f64,
        documents: docs.len(),
        oov_documents: oov,
    })
}
