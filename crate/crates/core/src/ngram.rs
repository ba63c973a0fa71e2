//! Word n-gram contexts: unigram rows plus hashed bigram buckets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LanguageId;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramConfig {
    /// 1 for unigrams only, 2 to add adjacent bigrams.
    pub max_n: u8,
    pub buckets: usize,
    /// Context elements dropped at random during training.
    pub dropout_k: usize,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig::unigrams()
    }
}

impl NgramConfig {
    pub fn unigrams() -> Self {
        NgramConfig {
            max_n: 1,
            buckets: 2_000_000,
            dropout_k: 0,
        }
    }

    pub fn bigrams() -> Self {
        NgramConfig {
            max_n: 2,
            buckets: 2_000_000,
            dropout_k: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.max_n) {
            return Err(Error::InvalidConfig(format!(
                "max_n must be 1 or 2, got {}",
                self.max_n
            )));
        }
        if self.buckets == 0 {
            return Err(Error::InvalidConfig("buckets must be >= 1".into()));
        }
        Ok(())
    }

    /// Rows of the input matrix reserved for bigram buckets.
    pub fn bucket_rows(&self) -> usize {
        if self.max_n >= 2 {
            self.buckets
        } else {
            0
        }
    }
}

/// Row indices into the input matrix making up one composition.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContextIndices(pub Vec<usize>);

impl ContextIndices {
    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Bucket of the bigram `(id1, id2)`: FNV-1a 64 over the language tag byte
/// followed by both ids as little-endian u64, reduced modulo `buckets`.
pub fn hash_bigram(id1: usize, id2: usize, lang: LanguageId, buckets: usize) -> usize {
    let mut key = [0u8; 17];
    key[0] = lang.tag();
    key[1..9].copy_from_slice(&(id1 as u64).to_le_bytes());
    key[9..17].copy_from_slice(&(id2 as u64).to_le_bytes());
    (fnv1a(&key) % buckets as u64) as usize
}

/// Collect `R(S)` for `tokens` into `out`: unigram indices, then one bucket
/// row (offset by `n_words`) per adjacent pair when bigrams are enabled.
/// With an rng and `dropout_k > 0`, up to `dropout_k` elements are removed,
/// always leaving at least one.
pub fn extract_context_into<R: Rng + ?Sized>(
    tokens: &[usize],
    lang: LanguageId,
    cfg: &NgramConfig,
    n_words: usize,
    rng: Option<&mut R>,
    out: &mut Vec<usize>,
) -> Result<()> {
    out.clear();
    if tokens.is_empty() {
        return Err(Error::EmptyContext);
    }
    out.extend_from_slice(tokens);
    if cfg.max_n >= 2 {
        out.extend(
            tokens
                .windows(2)
                .map(|w| n_words + hash_bigram(w[0], w[1], lang, cfg.buckets)),
        );
    }
    if let Some(rng) = rng {
        let drop = cfg.dropout_k.min(out.len() - 1);
        for _ in 0..drop {
            let j = rng.gen_range(0..out.len());
            out.swap_remove(j);
        }
    }
    Ok(())
}

pub fn extract_context<R: Rng + ?Sized>(
    tokens: &[usize],
    lang: LanguageId,
    cfg: &NgramConfig,
    n_words: usize,
    rng: Option<&mut R>,
) -> Result<ContextIndices> {
    let mut out = Vec::with_capacity(2 * tokens.len());
    extract_context_into(tokens, lang, cfg, n_words, rng, &mut out)?;
    Ok(ContextIndices(out))
}

/// Inference-time context: no dropout.
pub fn context_of(
    tokens: &[usize],
    lang: LanguageId,
    cfg: &NgramConfig,
    n_words: usize,
) -> Result<ContextIndices> {
    extract_context::<rand_chacha::ChaCha8Rng>(tokens, lang, cfg, n_words, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::hash::Hasher;

    fn fnv_oracle(bytes: &[u8]) -> u64 {
        let mut h = fnv::FnvHasher::default();
        h.write(bytes);
        h.finish()
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn bigram_hash_matches_oracle() {
        let buckets = 1 << 20;
        let mut key = vec![LanguageId::L1.tag()];
        key.extend_from_slice(&3u64.to_le_bytes());
        key.extend_from_slice(&7u64.to_le_bytes());
        assert_eq!(key.len(), 17);
        let expected = (fnv_oracle(&key) % buckets as u64) as usize;
        assert_eq!(hash_bigram(3, 7, LanguageId::L1, buckets), expected);
        assert_eq!(
            hash_bigram(3, 7, LanguageId::L1, buckets),
            hash_bigram(3, 7, LanguageId::L1, buckets)
        );
    }

    #[test]
    fn single_bucket() {
        assert_eq!(hash_bigram(12, 99, LanguageId::L2, 1), 0);
    }

    #[test]
    fn context_shapes() {
        let uni = NgramConfig::unigrams();
        let ctx = context_of(&[0, 1, 2], LanguageId::L1, &uni, 10).unwrap();
        assert_eq!(ctx.as_slice(), &[0, 1, 2]);

        let bi = NgramConfig {
            max_n: 2,
            buckets: 100,
            dropout_k: 0,
        };
        let ctx = context_of(&[0, 1, 2], LanguageId::L1, &bi, 10).unwrap();
        assert_eq!(ctx.len(), 5);
        assert_eq!(ctx.0[3], 10 + hash_bigram(0, 1, LanguageId::L1, 100));
        assert_eq!(ctx.0[4], 10 + hash_bigram(1, 2, LanguageId::L1, 100));

        let ctx = context_of(&[4], LanguageId::L1, &bi, 10).unwrap();
        assert_eq!(ctx.as_slice(), &[4]);

        assert!(matches!(
            context_of(&[], LanguageId::L1, &bi, 10),
            Err(Error::EmptyContext)
        ));
    }

    #[test]
    fn dropout_never_empties() {
        let cfg = NgramConfig {
            max_n: 2,
            buckets: 100,
            dropout_k: 10,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ctx = extract_context(&[1, 2], LanguageId::L2, &cfg, 5, Some(&mut rng)).unwrap();
        assert_eq!(ctx.len(), 1);
    }

    proptest! {
        #[test]
        fn context_size_and_ranges(
            tokens in prop::collection::vec(0usize..50, 1..30),
            buckets in 1usize..1000,
            l2 in any::<bool>(),
        ) {
            let lang = if l2 { LanguageId::L2 } else { LanguageId::L1 };
            let cfg = NgramConfig { max_n: 2, buckets, dropout_k: 0 };
            let ctx = context_of(&tokens, lang, &cfg, 50).unwrap();
            prop_assert_eq!(ctx.len(), 2 * tokens.len() - 1);
            for (i, &r) in ctx.as_slice().iter().enumerate() {
                if i < tokens.len() {
                    prop_assert!(r < 50);
                } else {
                    prop_assert!((50..50 + buckets).contains(&r));
                }
            }
        }

        #[test]
        fn dropout_size(tokens in prop::collection::vec(0usize..50, 1..30), k in 0usize..5, seed in any::<u64>()) {
            let cfg = NgramConfig { max_n: 2, buckets: 64, dropout_k: k };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let full = 2 * tokens.len() - 1;
            let ctx = extract_context(&tokens, LanguageId::L1, &cfg, 50, Some(&mut rng)).unwrap();
            prop_assert_eq!(ctx.len(), full - k.min(full - 1));
        }
    }
}
