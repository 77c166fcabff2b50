//! Joint image-text embedding space: vectors, cosine similarity, the on-disk
//! cache, and the backends that produce vectors.

mod backend;
mod cache;
mod gateway;

use std::path::PathBuf;

use thiserror::Error;

pub use backend::{EmbeddingBackend, HttpBackend, MockBackend};
pub use cache::{EmbeddingCache, CACHE_MAGIC};
pub use gateway::{batch_embed, caption_key, evidence_key, image_key, BatchOptions, BatchReport, Embedder};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("vector has zero dimensions")]
    EmptyVector,
    #[error("cannot resolve image reference `{0}`")]
    Unresolved(String),
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("embedding backend error: {0}")]
    Backend(String),
    #[error("malformed embedding cache: {0}")]
    CacheFormat(String),
    #[error("cache id longer than 65535 bytes: {0}")]
    IdTooLong(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A finite, non-zero vector from the embedding backend. Values are kept as
/// the backend produced them; cosine normalizes on the fly.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(EmbeddingError::ZeroNorm);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn from_f64(values: &[f64]) -> Result<Self, EmbeddingError> {
        Self::new(values.iter().map(|&v| v as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    /// Multiplies every coordinate by `factor` (must be positive and keep the
    /// vector finite).
    pub fn scaled(&self, factor: f32) -> Result<Self, EmbeddingError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub(crate) fn norm_sq(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum()
    }
}

impl AsRef<[f32]> for EmbeddingVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// Cosine similarity, accumulated in double precision and clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let na = a.norm_sq();
    let nb = b.norm_sq();
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    // Squared form: a common scale factor cancels in one rounded division, so
    // scaled copies of a vector tie exactly whenever the sums are exact.
    // `+ 0.0` folds a negative zero into positive zero for total ordering.
    let cos = (dot * dot / (na * nb)).sqrt().copysign(dot);
    Ok(cos.clamp(-1.0, 1.0) + 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        // 4 / (sqrt5 * sqrt5)
        assert!((cosine(&v(&[1.0, 2.0]), &v(&[2.0, 1.0])).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_mismatch() {
        let err = cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, EmbeddingError::DimensionMismatch { expected: 2, found: 3 }));
    }

    #[test]
    fn constructor_rejects_degenerate_vectors() {
        assert!(matches!(EmbeddingVector::new(vec![0.0, 0.0]), Err(EmbeddingError::ZeroNorm)));
        assert!(matches!(EmbeddingVector::new(vec![]), Err(EmbeddingError::EmptyVector)));
        assert!(matches!(EmbeddingVector::new(vec![f32::NAN]), Err(EmbeddingError::NonFinite)));
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-10.0f32..10.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            (a, b) in (1usize..64).prop_flat_map(|d| (nonzero_vec(d), nonzero_vec(d))),
            lambda in prop::sample::select(vec![0.5f32, 2.0, 10.0]),
        ) {
            let a = EmbeddingVector::new(a).unwrap();
            let b = EmbeddingVector::new(b).unwrap();
            let ab = cosine(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine(&b, &a).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-6);
            let scaled = a.scaled(lambda).unwrap();
            prop_assert!((cosine(&scaled, &b).unwrap() - ab).abs() < 1e-6);
        }
    }
}
