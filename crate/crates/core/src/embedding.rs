//! Deterministic text embeddings.
//!
//! The reference embedder is a hashed bag-of-tokens: lowercase the text, split
//! it on runs of non-alphanumeric characters, hash each token with FNV-1a
//! (64-bit), bucket the hash into `[0, dim)`, signed by bit 63, accumulate,
//! and L2-normalize. It has no subword features and no learned weights — its
//! job is to be dependency-free and bit-for-bit reproducible, which is what
//! the retrieval and classification tests key on.
//!
//! Similarity is plain cosine. Sums run in ascending index order so results
//! are identical across platforms.

use crate::error::Result;

/// Default embedding dimensionality.
pub const DEFAULT_DIM: usize = 256;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// A dense embedding. The all-zero vector encodes "no signal" (empty text);
/// every other vector is unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Wraps raw components. No normalization is applied; callers own the
    /// unit-length-or-zero convention.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zero(dim: usize) -> Self {
        Self { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean norm, accumulated in index order.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Cosine similarity in `[-1, 1]`; `0.0` when either vector has zero norm.
///
/// The dot product and both norms accumulate in ascending index order, so the
/// result is reproducible and exactly symmetric in its arguments.
pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| x * y)
        .sum();
    let norm_a = a.norm();
    let norm_b = b.norm();
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    dot / (norm_a * norm_b)
}

/// Anything that turns text into a fixed-dimension vector.
///
/// Implementations must be deterministic: identical text yields an identical
/// vector.
pub trait Embedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
    fn dim(&self) -> usize;
}

/// The built-in hashed bag-of-tokens embedder.
#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    dim: usize,
}

impl ReferenceEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    /// Lowercased alphanumeric token runs, in input order.
    fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect::<Vec<_>>()
            .into_iter()
    }
}

impl Default for ReferenceEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl Embedder for ReferenceEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut values = vec![0.0f64; self.dim];
        for token in Self::tokens(text) {
            let hash = fnv1a64(token.as_bytes());
            let index = (hash % self.dim as u64) as usize;
            let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
            values[index] += sign;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Ok(EmbeddingVector::from_values(values))
    }

    fn dim(&self) -> usize {
        self.dim
    }
}
