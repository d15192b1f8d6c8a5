//! Hashed unigram and bigram presence features.

use crate::corpus::{TokenId, Vocab};
use crate::par;

pub const DIM_BITS: u32 = 18;
pub const DIM: usize = 1 << DIM_BITS;
const MASK: u64 = (DIM as u64) - 1;
pub const HASH_SEED: u64 = 0x7261_7265_6669_6e64;

/// 64-bit FNV-1a with a seed folded into the offset basis.
pub fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn mix(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

fn unigram(h: u64) -> u32 {
    (mix(h ^ 0x1) & MASK) as u32
}

fn bigram(a: u64, b: u64) -> u32 {
    (mix(a.rotate_left(17) ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x2) & MASK) as u32
}

/// Sorted, deduplicated feature indices of a token sequence given as strings.
pub fn features_of_strs<S: AsRef<str>>(tokens: &[S]) -> Vec<u32> {
    let hashes: Vec<u64> = tokens
        .iter()
        .map(|t| fnv1a(t.as_ref().as_bytes(), HASH_SEED))
        .collect();
    from_hashes(&hashes)
}

fn from_hashes(hashes: &[u64]) -> Vec<u32> {
    let mut out: Vec<u32> = hashes.iter().map(|&h| unigram(h)).collect();
    out.extend(hashes.windows(2).map(|w| bigram(w[0], w[1])));
    out.sort_unstable();
    out.dedup();
    out
}

/// Caches token hashes for one corpus vocabulary. Feature indices depend only
/// on token strings, so models move freely between corpora.
#[derive(Debug, Clone)]
pub struct FeatureHasher {
    token_hash: Vec<u64>,
}

impl FeatureHasher {
    pub fn new(vocab: &Vocab) -> Self {
        let strs: Vec<&str> = vocab.iter().map(|(_, s)| s).collect();
        FeatureHasher {
            token_hash: par::map(&strs, |s| fnv1a(s.as_bytes(), HASH_SEED)),
        }
    }

    pub fn features(&self, tokens: &[TokenId]) -> Vec<u32> {
        let hashes: Vec<u64> = tokens.iter().map(|t| self.token_hash[t.0 as usize]).collect();
        from_hashes(&hashes)
    }
}
