use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use base64::Engine as _;
use rand_distr::{Distribution, StandardNormal};

use super::{EmbeddingError, EmbeddingVector};
use crate::images::ImageResolver;
use crate::seeding;
use crate::sidecar::{SidecarClient, SidecarError};

/// A producer of vectors in one joint image-text space.
///
/// Implementations must be deterministic for a fixed model: identical input
/// yields identical output.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> Result<usize, EmbeddingError>;
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;
    fn embed_image(&self, image_ref: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

/// Hash-seeded Gaussian vectors. Text and image inputs live in separate hash
/// domains, so a caption and an identically named image reference differ.
#[derive(Debug)]
pub struct MockBackend {
    dim: usize,
    resolver: ImageResolver,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(dim: usize) -> Self {
        Self::with_resolver(dim, ImageResolver::unchecked())
    }

    pub fn with_resolver(dim: usize, resolver: ImageResolver) -> Self {
        assert!(dim > 0);
        MockBackend { dim, resolver, calls: AtomicUsize::new(0) }
    }

    /// Number of backend requests served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn vector(&self, domain: &[u8], input: &[u8]) -> EmbeddingVector {
        let mut rng = seeding::rng_for(&[b"mock-embed", domain, input]);
        loop {
            let values: Vec<f32> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if let Ok(v) = EmbeddingVector::new(values) {
                return v;
            }
        }
    }
}

impl EmbeddingBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn dim(&self) -> Result<usize, EmbeddingError> {
        Ok(self.dim)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        texts
            .iter()
            .map(
                |t| {
                    if t.is_empty() {
                        Err(EmbeddingError::EmptyInput)
                    } else {
                        Ok(self.vector(b"text", t.as_bytes()))
                    }
                },
            )
            .collect()
    }

    fn embed_image(&self, image_ref: &str) -> Result<EmbeddingVector, EmbeddingError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.resolver.resolve(image_ref).is_none() {
            return Err(EmbeddingError::Unresolved(image_ref.to_string()));
        }
        Ok(self.vector(b"image", image_ref.as_bytes()))
    }
}

/// Backend served by the model sidecar over HTTP.
#[derive(Debug)]
pub struct HttpBackend {
    client: SidecarClient,
    resolver: ImageResolver,
    dim: OnceLock<usize>,
}

impl HttpBackend {
    pub fn new(client: SidecarClient, resolver: ImageResolver) -> Self {
        HttpBackend { client, resolver, dim: OnceLock::new() }
    }

    fn map_err(e: SidecarError) -> EmbeddingError {
        match e {
            SidecarError::Unavailable { .. } => EmbeddingError::BackendUnavailable(e.to_string()),
            other => EmbeddingError::Backend(other.to_string()),
        }
    }

    fn check_dim(&self, reported: usize, values: Vec<f32>) -> Result<EmbeddingVector, EmbeddingError> {
        let expected = self.dim()?;
        if reported != expected || values.len() != expected {
            return Err(EmbeddingError::DimensionMismatch { expected, found: values.len() });
        }
        EmbeddingVector::new(values)
    }
}

impl EmbeddingBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn dim(&self) -> Result<usize, EmbeddingError> {
        if let Some(&d) = self.dim.get() {
            return Ok(d);
        }
        let health = self.client.health().map_err(Self::map_err)?;
        if health.dim == 0 {
            return Err(EmbeddingError::Backend("sidecar reported dim 0".into()));
        }
        Ok(*self.dim.get_or_init(|| health.dim))
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(EmbeddingError::EmptyInput);
        }
        let response = self.client.embed_texts(texts).map_err(Self::map_err)?;
        if response.vectors.len() != texts.len() {
            return Err(EmbeddingError::Backend(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                response.vectors.len()
            )));
        }
        response.vectors.into_iter().map(|v| self.check_dim(response.dim, v)).collect()
    }

    fn embed_image(&self, image_ref: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let bytes = self.resolver.read(image_ref).ok_or_else(|| EmbeddingError::Unresolved(image_ref.to_string()))?;
        let payload = base64::engine::general_purpose::STANDARD.encode(bytes);
        let response = self.client.embed_image(payload).map_err(Self::map_err)?;
        self.check_dim(response.dim, response.vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_deterministic_and_domain_separated() {
        let b = MockBackend::new(16);
        let a1 = b.embed_texts(&["a caption".into()]).unwrap();
        let a2 = b.embed_texts(&["a caption".into()]).unwrap();
        assert_eq!(a1, a2);
        let img = b.embed_image("a caption").unwrap();
        assert_ne!(a1[0], img);
        assert_eq!(b.calls(), 3);
    }

    #[test]
    fn mock_distinct_images_differ() {
        let b = MockBackend::new(8);
        let x = b.embed_image("img/x.png").unwrap();
        let y = b.embed_image("img/y.png").unwrap();
        assert!(x.values().iter().zip(y.values()).any(|(p, q)| p != q));
    }

    #[test]
    fn mock_unresolved_image_named() {
        let dir = tempfile::tempdir().unwrap();
        let b = MockBackend::with_resolver(4, ImageResolver::new(dir.path()));
        let err = b.embed_image("img/nope.png").unwrap_err();
        assert!(err.to_string().contains("img/nope.png"));
    }
}
