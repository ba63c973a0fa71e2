//! Evaluation protocols over frozen word vectors: word translation,
//! monolingual word similarity, and cross-lingual sentence retrieval.
//!
//! All retrieval runs on unit-normalized vectors. Ties are broken towards the
//! lower candidate index so results are deterministic.

mod lexicon;
mod report;
mod retrieval;
mod sentences;
mod similarity;

pub use lexicon::{word_translation_p1, BilingualDictionary, TranslationResult};
pub use report::{render_table, MetricRecord};
pub use retrieval::{cosine, csls_retrieve, nn_retrieve, Criterion, Csls, EmbeddingSet};
pub use sentences::{
    sentence_embed_tfidf, sentence_retrieval_p1, IdfTable, RetrievalOptions, SentenceRetrieval,
};
pub use similarity::{pearson, word_similarity_eval, SimilarityDataset, SimilarityResult};

/// Neighbourhood size of the CSLS penalty terms.
pub const DEFAULT_CSLS_K: usize = 10;
/// Dictionary queries evaluated for word translation.
pub const DEFAULT_WT_QUERIES: usize = 1500;
/// Candidate pool size, for words and for sentences.
pub const DEFAULT_CANDIDATES: usize = 200_000;
/// Source sentences queried in sentence retrieval.
pub const DEFAULT_SR_QUERIES: usize = 2000;
