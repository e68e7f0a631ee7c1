use serde::{Deserialize, Serialize};

use crate::text::tokens;

pub const EMBEDDING_DIM: usize = 1024;

/// Turns text into a fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dims(&self) -> usize;
    fn embed(&self, text: &str) -> EmbeddingVector;
}

/// Either the zero vector or a unit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length; all-zero input stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    /// Cosine similarity of two embeddings; both are unit or zero, so this is
    /// the dot product.
    pub fn cosine(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Signed feature hashing of lowercase alphanumeric tokens.
///
/// Each token is hashed with [`fnv1a64`] over its UTF-8 bytes. The bucket is
/// `hash % dims`; the count is subtracted when bit 63 of the hash is set and
/// added otherwise. The accumulated vector is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dims: usize,
}

impl HashingEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "embedding dimension must be positive");
        Self { dims }
    }

    pub fn bucket(&self, token: &str) -> (usize, f64) {
        let h = fnv1a64(token.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dims as u64) as usize, sign)
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(EMBEDDING_DIM)
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> &str {
        "hashing-bow"
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0; self.dims];
        for t in tokens(text) {
            let (i, sign) = self.bucket(&t);
            v[i] += sign;
        }
        EmbeddingVector::normalized(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_zero() {
        let e = HashingEmbedder::default();
        let v = e.embed("");
        assert!(v.is_zero());
        assert_eq!(v.dims(), EMBEDDING_DIM);
        assert!(e.embed(" ,.! ").is_zero());
    }

    #[test]
    fn unit_norm_and_determinism() {
        let e = HashingEmbedder::default();
        let a = e.embed("MQTT brokers route telemetry");
        let b = e.embed("mqtt BROKERS route telemetry!");
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert!((a.cosine(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_tokens_without_collisions_are_orthogonal() {
        let e = HashingEmbedder::default();
        let left = ["sensor", "relay", "humidity"];
        let right = ["quiz", "answer", "lecture"];
        // Bucket assignments from the documented hash, computed independently.
        let bucket = |t: &str| {
            let mut h: u64 = 0xcbf29ce484222325;
            for b in t.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            (h % 1024) as usize
        };
        let lb: Vec<usize> = left.iter().map(|t| bucket(t)).collect();
        let rb: Vec<usize> = right.iter().map(|t| bucket(t)).collect();
        assert!(lb.iter().all(|b| !rb.contains(b)), "fixture collides: {lb:?} {rb:?}");
        assert_eq!(e.embed(&left.join(" ")).cosine(&e.embed(&right.join(" "))), 0.0);
    }

    #[test]
    fn repeated_text_has_identical_vector() {
        let e = HashingEmbedder::default();
        let t = "edge node filters sensor data";
        assert_eq!(e.embed(t), e.embed(&format!("{t} {t}")));
    }
}
