use std::path::Path;
use std::sync::Arc;

use super::{EmbeddingBackend, EmbeddingCache, EmbeddingError, EmbeddingVector};
use crate::corpus::{Corpus, Modality};
use crate::par::Exec;

/// Cache key of a claim caption.
pub fn caption_key(claim_id: &str) -> String {
    format!("claim/{claim_id}/caption")
}

/// Cache key of a claim image.
pub fn image_key(claim_id: &str) -> String {
    format!("claim/{claim_id}/image")
}

/// Cache key of an evidence item.
pub fn evidence_key(evidence_id: &str) -> String {
    format!("evidence/{evidence_id}")
}

/// Cache-first access to an embedding backend. Without a backend every cache
/// miss is a `BackendUnavailable` error.
pub struct Embedder {
    cache: EmbeddingCache,
    backend: Option<Arc<dyn EmbeddingBackend>>,
}

impl Embedder {
    pub fn new(cache: EmbeddingCache, backend: Option<Arc<dyn EmbeddingBackend>>) -> Self {
        Embedder { cache, backend }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn into_cache(self) -> EmbeddingCache {
        self.cache
    }

    fn backend(&self) -> Result<&dyn EmbeddingBackend, EmbeddingError> {
        self.backend.as_deref().ok_or_else(|| EmbeddingError::BackendUnavailable("no backend configured".into()))
    }

    fn store(&mut self, key: &str, vector: EmbeddingVector) -> Result<EmbeddingVector, EmbeddingError> {
        self.cache.insert(key, vector.clone())?;
        Ok(vector)
    }

    pub fn embed_text(&mut self, key: &str, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        if let Some(v) = self.cache.get(key) {
            return Ok(v.clone());
        }
        let mut out = self.backend()?.embed_texts(&[text.to_string()])?;
        let vector = out.pop().ok_or_else(|| EmbeddingError::Backend("empty response".into()))?;
        self.store(key, vector)
    }

    pub fn embed_image(&mut self, key: &str, image_ref: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if image_ref.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        if let Some(v) = self.cache.get(key) {
            return Ok(v.clone());
        }
        let vector = self.backend()?.embed_image(image_ref)?;
        self.store(key, vector)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchOptions {
    /// Texts per backend request.
    pub text_batch: usize,
    pub exec: Exec,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions { text_batch: 32, exec: Exec::default() }
    }
}

/// Outcome of a batch embedding run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchReport {
    /// Entries the corpus requires (2 per claim plus 1 per evidence item).
    pub required: usize,
    /// Entries already in the cache before the run.
    pub reused: usize,
    /// Entries embedded in this run.
    pub embedded: usize,
    /// Keys that could not be embedded, with the reason.
    pub failed: Vec<(String, String)>,
}

impl BatchReport {
    /// Fraction of required entries present after the run.
    pub fn coverage(&self) -> f64 {
        if self.required == 0 {
            1.0
        } else {
            (self.required - self.failed.len()) as f64 / self.required as f64
        }
    }
}

struct Job {
    key: String,
    input: String,
    modality: Modality,
}

fn required_jobs(corpus: &Corpus) -> Vec<Job> {
    let mut jobs = Vec::with_capacity(corpus.claims().len() * 2 + corpus.evidence().len());
    for claim in corpus.claims() {
        jobs.push(Job { key: caption_key(&claim.id), input: claim.caption.clone(), modality: Modality::Text });
        jobs.push(Job { key: image_key(&claim.id), input: claim.image_ref.clone(), modality: Modality::Image });
    }
    for item in corpus.evidence() {
        jobs.push(Job { key: evidence_key(&item.id), input: item.content.clone(), modality: item.modality });
    }
    jobs
}

type JobResult = Result<EmbeddingVector, String>;

fn embed_text_chunk(backend: &dyn EmbeddingBackend, chunk: &[&Job]) -> Vec<JobResult> {
    let texts: Vec<String> = chunk.iter().map(|j| j.input.clone()).collect();
    match backend.embed_texts(&texts) {
        Ok(vectors) if vectors.len() == chunk.len() => vectors.into_iter().map(Ok).collect(),
        // isolate the failing items
        _ if chunk.len() > 1 => chunk
            .iter()
            .map(|j| {
                backend
                    .embed_texts(std::slice::from_ref(&j.input))
                    .and_then(|mut v| v.pop().ok_or_else(|| EmbeddingError::Backend("empty response".into())))
                    .map_err(|e| e.to_string())
            })
            .collect(),
        Ok(_) => vec![Err("backend returned wrong number of vectors".into())],
        Err(e) => vec![Err(e.to_string())],
    }
}

/// Embeds every claim caption, claim image and evidence item of `corpus`
/// that is not already in the cache at `cache_out`, then persists the cache.
///
/// Backend requests fan out per `opts.exec`; results are merged by a single
/// writer, and the file is written in key order, so the cache content does
/// not depend on completion order. Item failures are reported, not fatal.
pub fn batch_embed(
    corpus: &Corpus,
    backend: &dyn EmbeddingBackend,
    cache_out: &Path,
    opts: BatchOptions,
) -> Result<(EmbeddingCache, BatchReport), EmbeddingError> {
    let existing = if cache_out.exists() { Some(EmbeddingCache::read_from(cache_out)?) } else { None };
    let jobs = required_jobs(corpus);
    let mut report = BatchReport { required: jobs.len(), ..Default::default() };

    let pending: Vec<&Job> = jobs.iter().filter(|j| !existing.as_ref().is_some_and(|c| c.contains(&j.key))).collect();
    report.reused = jobs.len() - pending.len();

    if pending.is_empty() {
        let cache = existing.unwrap_or_else(|| EmbeddingCache::new(backend.dim().unwrap_or(1)));
        if !cache_out.exists() {
            cache.write_to(cache_out)?;
        }
        return Ok((cache, report));
    }

    let dim = match backend.dim() {
        Ok(d) => d,
        Err(e) => {
            report.failed = pending.iter().map(|j| (j.key.clone(), e.to_string())).collect();
            let cache = match existing {
                Some(c) => c,
                None => return Err(e),
            };
            return Ok((cache, report));
        }
    };
    let mut cache = match existing {
        Some(c) if c.dim() != dim => {
            return Err(EmbeddingError::DimensionMismatch { expected: c.dim(), found: dim });
        }
        Some(c) => c,
        None => EmbeddingCache::new(dim),
    };

    let text_jobs: Vec<&Job> = pending.iter().copied().filter(|j| j.modality == Modality::Text).collect();
    let image_jobs: Vec<&Job> = pending.iter().copied().filter(|j| j.modality == Modality::Image).collect();

    let chunks: Vec<&[&Job]> = text_jobs.chunks(opts.text_batch.max(1)).collect();
    let text_results: Vec<JobResult> =
        opts.exec.map(&chunks, |chunk| embed_text_chunk(backend, chunk)).into_iter().flatten().collect();
    let image_results: Vec<JobResult> =
        opts.exec.map(&image_jobs, |job| backend.embed_image(&job.input).map_err(|e| e.to_string()));

    let finished = text_jobs.iter().zip(text_results).chain(image_jobs.iter().zip(image_results));
    for (job, result) in finished {
        match result.and_then(|v| cache.insert(job.key.clone(), v).map_err(|e| e.to_string())) {
            Ok(()) => report.embedded += 1,
            Err(reason) => report.failed.push((job.key.clone(), reason)),
        }
    }
    report.failed.sort();
    cache.write_to(cache_out)?;
    Ok((cache, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Claim, EvidenceItem, Label, PollutionKind, Provenance, Split};
    use crate::embedding::MockBackend;

    fn corpus() -> Corpus {
        let claims = (1..=2)
            .map(|i| Claim {
                id: format!("c{i}"),
                caption: format!("caption {i}"),
                image_ref: format!("img/c{i}.jpg"),
                label: Label::True,
                split: Split::Test,
            })
            .collect();
        let mut evidence = Vec::new();
        for i in 1..=2 {
            for (m, content) in [(Modality::Text, "some text"), (Modality::Image, "img/e.jpg")] {
                evidence.push(EvidenceItem {
                    id: format!("e{i}{m}"),
                    claim_id: format!("c{i}"),
                    modality: m,
                    content: content.into(),
                    provenance: Provenance::Clean,
                    kind: PollutionKind::None,
                });
            }
        }
        Corpus::new(claims, evidence).unwrap()
    }

    #[test]
    fn entry_count_and_idempotence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.emb");
        let backend = MockBackend::new(8);
        let (cache, report) = batch_embed(&corpus(), &backend, &path, BatchOptions::default()).unwrap();
        assert_eq!(cache.len(), 2 * 2 + 4);
        assert_eq!(report.embedded, 8);
        assert!(report.failed.is_empty());

        let calls = backend.calls();
        let (again, report) = batch_embed(&corpus(), &backend, &path, BatchOptions::default()).unwrap();
        assert_eq!(backend.calls(), calls);
        assert_eq!(report.embedded, 0);
        assert_eq!(report.reused, 8);
        assert_eq!(again, cache);
        assert_eq!(EmbeddingCache::read_from(&path).unwrap(), cache);
    }

    #[test]
    fn parallel_and_sequential_caches_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let backend = MockBackend::new(8);
        let a = dir.path().join("a.emb");
        let b = dir.path().join("b.emb");
        let opts = |exec| BatchOptions { text_batch: 1, exec };
        batch_embed(&corpus(), &backend, &a, opts(Exec::SEQUENTIAL)).unwrap();
        batch_embed(&corpus(), &backend, &b, opts(Exec::parallel(Some(4)))).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn embedder_prefers_cache() {
        let mut cache = EmbeddingCache::new(2);
        let cached = EmbeddingVector::new(vec![3.0, 4.0]).unwrap();
        cache.insert("k", cached.clone()).unwrap();
        let mut embedder = Embedder::new(cache, None);
        assert_eq!(embedder.embed_text("k", "whatever").unwrap(), cached);
        assert!(matches!(embedder.embed_text("other", "x"), Err(EmbeddingError::BackendUnavailable(_))));
        assert!(matches!(embedder.embed_text("k", ""), Err(EmbeddingError::EmptyInput)));
    }

    #[test]
    fn embedder_rejects_backend_dim_mismatch() {
        let backend: Arc<dyn EmbeddingBackend> = Arc::new(MockBackend::new(3));
        let mut embedder = Embedder::new(EmbeddingCache::new(2), Some(backend));
        let err = embedder.embed_text("k", "text").unwrap_err();
        assert!(matches!(err, EmbeddingError::DimensionMismatch { expected: 2, found: 3 }));
    }
}
