//! Joint bilingual word and sentence embeddings trained on sentence-aligned
//! parallel text.
//!
//! Sentences are represented by the average of their word n-gram vectors.
//! Every target word is predicted from the rest of its own sentence and from
//! the full aligned translation, so both languages share one space. The
//! crate also provides the evaluations used to inspect such models: word
//! translation, word similarity, sentence retrieval, and zero-shot document
//! classification.
//!
//! The numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the single precision types used for training and storage.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod ngram;
pub mod scalar;
pub mod trainer;

pub use corpus::{LanguageId, SentencePair, Vocabulary};
pub use error::{Error, Result};
pub use model::{BilingualModel, EmbeddingMatrices, Matrix, VectorSource, WordVectors};
pub use ngram::NgramConfig;
pub use scalar::Real;
pub use trainer::{TrainConfig, TrainReport};

/// Single precision model, the on-disk representation.
pub type Model = BilingualModel<f32>;
pub type Embeddings = EmbeddingMatrices<f32>;
pub type Vectors = WordVectors<f32>;
pub type Mlp = classifier::MlpParams<f32>;
