//! Document chunking, hashed embeddings and exact top-k retrieval.

mod cache;
mod embed;
mod index;
mod splitter;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::IndexCache;
pub use embed::{fnv1a64, Embedder, EmbeddingVector, HashingEmbedder, EMBEDDING_DIM};
pub use index::{build_index, search, IndexEntry, SearchHit, VectorIndex};
pub use splitter::{split_text, Chunk, SplitterParams};

/// Passages returned when a query does not say how many it wants.
pub const DEFAULT_K: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("chunk size {chunk_size} must exceed overlap {overlap}")]
    InvalidParams { chunk_size: usize, overlap: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("document {0} must have non-empty id and text")]
    EmptyDocument(String),
    #[error("query has {query} dimensions, index has {index}")]
    DimensionMismatch { query: usize, index: usize },
    #[error("index dump: {0}")]
    Dump(String),
}

/// Uploaded course material as plain text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    /// SHA-256 of `text`; identical content always has the same version.
    pub version: String,
}

impl Document {
    pub fn new(doc_id: &str, title: &str, text: &str) -> Result<Self, RetrievalError> {
        if doc_id.trim().is_empty() || text.is_empty() {
            return Err(RetrievalError::EmptyDocument(doc_id.to_string()));
        }
        Ok(Self {
            doc_id: doc_id.to_string(),
            title: title.to_string(),
            text: text.to_string(),
            version: crate::sha256_hex(text.as_bytes()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub text: String,
    pub k: usize,
}

impl RetrievalQuery {
    pub fn new(text: &str, k: usize) -> Result<Self, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        Ok(Self { text: text.to_string(), k })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_content_digest() {
        let a = Document::new("d1", "A", "same text").unwrap();
        let b = Document::new("d2", "B", "same text").unwrap();
        let c = Document::new("d1", "A", "other text").unwrap();
        assert_eq!(a.version, b.version);
        assert_ne!(a.version, c.version);
        assert_eq!(a.version.len(), 64);
        assert!(Document::new("d1", "A", "").is_err());
        assert!(Document::new(" ", "A", "x").is_err());
    }

    #[test]
    fn k_must_be_positive() {
        assert_eq!(RetrievalQuery::new("x", 0), Err(RetrievalError::InvalidK));
    }
}
