//! Task categories and candidate-label classification.
//!
//! The category set is a fixed, ordered list of labels whose embeddings are
//! computed once up front. Classification maps an arbitrary candidate string
//! to the nearest label by cosine similarity, with deterministic tie-breaks,
//! and can never return anything outside the set.

use crate::embedding::{cosine_sim, Embedder, EmbeddingVector};
use crate::error::Result;

/// The seven default task categories, in canonical order. The order matters:
/// category ids are indexes into this list, and classification ties resolve
/// to the smaller index.
pub const DEFAULT_CATEGORY_LABELS: [&str; 7] = [
    "judgment",
    "counting",
    "recognition",
    "comparison",
    "addition",
    "removal",
    "replacement",
];

/// Index into a [`CategorySet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryId(pub usize);

impl std::fmt::Display for CategoryId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered label list plus the precomputed label embeddings.
#[derive(Debug, Clone)]
pub struct CategorySet {
    labels: Vec<String>,
    embeddings: Vec<EmbeddingVector>,
}

/// Result of classifying a candidate label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classified {
    pub category: CategoryId,
    /// True when the candidate embedded to the zero vector (empty or
    /// all-punctuation input); the returned category is then the index-0
    /// fallback rather than a similarity winner.
    pub degenerate: bool,
}

impl CategorySet {
    /// Builds a set from labels, embedding each one with `embedder`.
    ///
    /// Labels must be distinct and there must be at least two of them.
    pub fn new<S: AsRef<str>>(labels: &[S], embedder: &dyn Embedder) -> Result<Self> {
        if labels.len() < 2 {
            return Err(crate::error::EhcError::Config(format!(
                "category set needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in labels {
            if !seen.insert(l.as_ref()) {
                return Err(crate::error::EhcError::Config(format!(
                    "duplicate category label {:?}",
                    l.as_ref()
                )));
            }
        }
        let labels: Vec<String> = labels.iter().map(|l| l.as_ref().to_owned()).collect();
        let embeddings = labels
            .iter()
            .map(|l| embedder.embed(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels, embeddings })
    }

    /// The default seven-category set.
    pub fn default_set(embedder: &dyn Embedder) -> Result<Self> {
        Self::new(&DEFAULT_CATEGORY_LABELS, embedder)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: CategoryId) -> &str {
        &self.labels[id.0]
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = CategoryId> {
        (0..self.labels.len()).map(CategoryId)
    }

    /// Looks a label up by exact string match.
    pub fn find(&self, label: &str) -> Option<CategoryId> {
        self.labels.iter().position(|l| l == label).map(CategoryId)
    }

    /// Maps an arbitrary candidate string to the closest category.
    ///
    /// Closed-world: the result is always a valid id. The winner is the
    /// highest cosine similarity between the candidate embedding and each
    /// label embedding; ties go to the smaller index. A candidate that embeds
    /// to the zero vector cannot be scored and falls back to index 0 with the
    /// `degenerate` flag set.
    pub fn classify(&self, candidate: &str, embedder: &dyn Embedder) -> Result<Classified> {
        let cand = embedder.embed(candidate)?;
        if cand.is_zero() {
            return Ok(Classified { category: CategoryId(0), degenerate: true });
        }
        let mut best = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for (k, label_vec) in self.embeddings.iter().enumerate() {
            let sim = cosine_sim(&cand, label_vec);
            // Strict > keeps the smallest index on ties.
            if sim > best_sim {
                best = k;
                best_sim = sim;
            }
        }
        Ok(Classified { category: CategoryId(best), degenerate: false })
    }

    /// All label similarities for a candidate, in category order. Useful for
    /// diagnostics and oracle tests.
    pub fn similarity_profile(&self, candidate: &str, embedder: &dyn Embedder) -> Result<Vec<f64>> {
        let cand = embedder.embed(candidate)?;
        Ok(self.embeddings.iter().map(|e| cosine_sim(&cand, e)).collect())
    }
}
