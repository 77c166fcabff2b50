//! Synthetic adversarial fixture with hand-placed embeddings.
//!
//! Every claim gets its own random orthonormal frame `f0..f5`; the caption
//! sits on `f0`. Generated evidence is placed very close to the claim within
//! its own modality (generated text near the caption, generated images near
//! the claim image) but far from the claim across modalities, so evidence
//! taken in manifest order pulls true claims below the threshold, while
//! cross-modal reranking and reasoning ignore it.
//!
//! | vector          | true claim                 | false claim          |
//! |-----------------|----------------------------|----------------------|
//! | claim image     | 0.7 f0 + 0.714 f1          | f1                   |
//! | clean text      | cos20° f0 + sin20° f1      | 0.572 f0 + 0.82 f1   |
//! | clean image     | 0.95 f0 + 0.312 f1         | 0.85 f0 + 0.527 f2   |
//! | generated text  | 0.91 f0 - 0.415 f1         | 0.91 f0 + 0.415 f2   |
//! | generated image | 0.91 img + 0.415 img⊥      | 0.91 f1 + 0.415 f3   |
//!
//! `img⊥` is the unit vector orthogonal to the claim image in the `f0, f1`
//! plane pointing away from the caption. A small per-item jitter breaks exact
//! ties. [`AdversarialFixture::verify`] re-measures the geometry before use.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::corpus::{Claim, Corpus, CorpusError, EvidenceItem, Label, Modality, PollutionKind, Provenance, Split};
use crate::detector::{ComponentWeights, DetectorConfig, Strategy};
use crate::embedding::{caption_key, cosine, evidence_key, image_key, EmbeddingCache, EmbeddingError, EmbeddingVector};
use crate::pollution::generated_id;
use crate::seeding;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture parameters: {0}")]
    Params(String),
    #[error("fixture geometry violated for `{id}`: {what}")]
    Geometry { id: String, what: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub const CLEAN_TEXTS: usize = 2;
pub const CLEAN_IMAGES: usize = 5;
pub const THRESHOLD: f64 = 0.7;
const JITTER: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureParams {
    /// Number of claims; half are true.
    pub claims: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams { claims: 40, dim: 32, seed: 7 }
    }
}

#[derive(Debug, Clone)]
pub struct AdversarialFixture {
    /// Claims with clean evidence only.
    pub corpus: Corpus,
    /// One generated item per clean item.
    pub pool: Vec<EvidenceItem>,
    pub cache: EmbeddingCache,
}

impl AdversarialFixture {
    /// Equal weights, threshold 0.7, top-1 text and top-5 images.
    pub fn detector(strategy: Strategy) -> DetectorConfig {
        DetectorConfig {
            weights: ComponentWeights::default(),
            threshold: THRESHOLD,
            k_text: 1,
            k_image: CLEAN_IMAGES,
            strategy,
        }
    }

    pub fn build(params: FixtureParams) -> Result<Self, FixtureError> {
        if params.claims == 0 || !params.claims.is_multiple_of(2) {
            return Err(FixtureError::Params("claim count must be even and positive".into()));
        }
        if params.dim < 6 {
            return Err(FixtureError::Params("dimension must be at least 6".into()));
        }
        let mut claims = Vec::new();
        let mut evidence = Vec::new();
        let mut pool = Vec::new();
        let mut cache = EmbeddingCache::new(params.dim);
        for n in 0..params.claims {
            let id = format!("adv-{n:04}");
            let truth = n % 2 == 0;
            let mut rng = seeding::rng_for(&[b"fixture", &params.seed.to_le_bytes(), id.as_bytes()]);
            let f = frame(&mut rng, params.dim);
            let mut put = |key: String, coeffs: &[(usize, f64)], rng: &mut rand_chacha::ChaCha8Rng| {
                let mut v = vec![0.0; params.dim];
                for &(i, c) in coeffs {
                    for (x, b) in v.iter_mut().zip(&f[i]) {
                        *x += c * b;
                    }
                }
                for x in v.iter_mut() {
                    *x += JITTER * rng.sample::<f64, _>(StandardNormal);
                }
                cache.insert(key, EmbeddingVector::from_f64(&v)?)
            };

            let s20 = 20f64.to_radians();
            let geo: Geometry = if truth {
                let (a, b) = (0.7, (1.0f64 - 0.49).sqrt());
                Geometry {
                    image: vec![(0, a), (1, b)],
                    clean_text: vec![(0, s20.cos()), (1, s20.sin())],
                    clean_image: vec![(0, 0.95), (1, (1.0f64 - 0.95 * 0.95).sqrt())],
                    gen_text: vec![(0, 0.91), (1, -(1.0f64 - 0.91 * 0.91).sqrt())],
                    // 0.91 * (a f0 + b f1) + 0.415 * (-b f0 + a f1)
                    gen_image: {
                        let o = (1.0f64 - 0.91 * 0.91).sqrt();
                        vec![(0, 0.91 * a - o * b), (1, 0.91 * b + o * a)]
                    },
                }
            } else {
                let o = (1.0f64 - 0.91 * 0.91).sqrt();
                Geometry {
                    image: vec![(1, 1.0)],
                    clean_text: vec![(0, 0.572), (1, 0.82)],
                    clean_image: vec![(0, 0.85), (2, (1.0f64 - 0.85 * 0.85).sqrt())],
                    gen_text: vec![(0, 0.91), (2, o)],
                    gen_image: vec![(1, 0.91), (3, o)],
                }
            };

            put(caption_key(&id), &[(0, 1.0)], &mut rng)?;
            put(image_key(&id), &geo.image, &mut rng)?;
            claims.push(Claim {
                id: id.clone(),
                caption: format!("synthetic caption {n}"),
                image_ref: format!("adv/{id}.png"),
                label: Label::from_bool(truth),
                split: Split::Test,
            });
            let slots =
                (0..CLEAN_TEXTS).map(|i| (Modality::Text, i)).chain((0..CLEAN_IMAGES).map(|i| (Modality::Image, i)));
            for (modality, i) in slots {
                let (clean_id, content, kind, clean_geo, gen_geo) = match modality {
                    Modality::Text => (
                        format!("{id}-t{i}"),
                        format!("synthetic evidence text {i} for {id}"),
                        if i % 2 == 0 { PollutionKind::Support } else { PollutionKind::Refute },
                        &geo.clean_text,
                        &geo.gen_text,
                    ),
                    Modality::Image => (
                        format!("{id}-i{i}"),
                        format!("adv/{id}-i{i}.png"),
                        PollutionKind::ImageVariation,
                        &geo.clean_image,
                        &geo.gen_image,
                    ),
                };
                let gen_id = generated_id(&clean_id, kind);
                put(evidence_key(&clean_id), clean_geo, &mut rng)?;
                put(evidence_key(&gen_id), gen_geo, &mut rng)?;
                let gen_content = match modality {
                    Modality::Text => format!("generated {kind} text {i} for {id}"),
                    Modality::Image => format!("adv/{id}-i{i}.var.png"),
                };
                evidence.push(EvidenceItem {
                    id: clean_id,
                    claim_id: id.clone(),
                    modality,
                    content,
                    provenance: Provenance::Clean,
                    kind: PollutionKind::None,
                });
                pool.push(EvidenceItem {
                    id: gen_id,
                    claim_id: id.clone(),
                    modality,
                    content: gen_content,
                    provenance: Provenance::Generated,
                    kind,
                });
            }
        }
        let fixture = AdversarialFixture { corpus: Corpus::new(claims, evidence)?, pool, cache };
        fixture.verify()?;
        Ok(fixture)
    }

    /// Checks the construction: clean evidence agrees with the claim across
    /// modalities (cosine at least 0.8), generated evidence is at least 0.9
    /// to the claim within its modality, and on true claims the
    /// cross-modal scores separate clean from generated evidence.
    pub fn verify(&self) -> Result<(), FixtureError> {
        let get = |key: String| {
            self.cache
                .get(&key)
                .ok_or_else(|| FixtureError::Geometry { id: key.clone(), what: "missing vector".into() })
        };
        let fail = |id: &str, what: String| Err(FixtureError::Geometry { id: id.to_string(), what });
        for claim in self.corpus.claims() {
            let caption = get(caption_key(&claim.id))?;
            let image = get(image_key(&claim.id))?;
            let mut clean_cross = (f64::INFINITY, f64::INFINITY);
            for e in self.corpus.evidence_for(&claim.id) {
                let v = get(evidence_key(&e.id))?;
                let cross = match e.modality {
                    Modality::Text => cosine(v, image)?,
                    Modality::Image => cosine(v, caption)?,
                };
                if cross < 0.8 {
                    return fail(&e.id, format!("clean cross-modal cosine {cross:.4} < 0.8"));
                }
                match e.modality {
                    Modality::Text => clean_cross.0 = clean_cross.0.min(cross),
                    Modality::Image => clean_cross.1 = clean_cross.1.min(cross),
                }
            }
            for g in self.pool.iter().filter(|g| g.claim_id == claim.id) {
                let v = get(evidence_key(&g.id))?;
                let (intra, cross, clean_min) = match g.modality {
                    Modality::Text => (cosine(v, caption)?, cosine(v, image)?, clean_cross.0),
                    Modality::Image => (cosine(v, image)?, cosine(v, caption)?, clean_cross.1),
                };
                if intra < 0.9 {
                    return fail(&g.id, format!("generated intra-modal cosine {intra:.4} < 0.9"));
                }
                if cross > clean_min - 0.2 {
                    return fail(
                        &g.id,
                        format!("generated cross-modal cosine {cross:.4} too close to clean {clean_min:.4}"),
                    );
                }
            }
        }
        Ok(())
    }
}

struct Geometry {
    image: Vec<(usize, f64)>,
    clean_text: Vec<(usize, f64)>,
    clean_image: Vec<(usize, f64)>,
    gen_text: Vec<(usize, f64)>,
    gen_image: Vec<(usize, f64)>,
}

/// Six orthonormal vectors from Gram-Schmidt on Gaussian draws.
fn frame(rng: &mut impl Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(6);
    while basis.len() < 6 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_and_verifies() {
        let fx = AdversarialFixture::build(FixtureParams { claims: 4, dim: 16, seed: 1 }).unwrap();
        assert_eq!(fx.corpus.claims().len(), 4);
        assert_eq!(fx.corpus.evidence().len(), 4 * (CLEAN_TEXTS + CLEAN_IMAGES));
        assert_eq!(fx.pool.len(), fx.corpus.evidence().len());
        assert_eq!(fx.cache.len(), 4 * 2 + 2 * fx.pool.len());
    }

    #[test]
    fn deterministic_per_seed() {
        let p = FixtureParams { claims: 2, dim: 8, seed: 3 };
        let a = AdversarialFixture::build(p).unwrap();
        let b = AdversarialFixture::build(p).unwrap();
        assert_eq!(a.cache.to_bytes(), b.cache.to_bytes());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(AdversarialFixture::build(FixtureParams { claims: 3, ..Default::default() }).is_err());
        assert!(AdversarialFixture::build(FixtureParams { dim: 5, ..Default::default() }).is_err());
    }

    #[test]
    fn verify_catches_tampering() {
        let mut fx = AdversarialFixture::build(FixtureParams { claims: 2, dim: 8, seed: 1 }).unwrap();
        let image = fx.cache.get(&image_key("adv-0000")).unwrap().clone();
        let gen = generated_id("adv-0000-t0", PollutionKind::Support);
        let mut cache = EmbeddingCache::new(8);
        for (k, v) in fx.cache.iter() {
            let v = if k == evidence_key(&gen) { &image } else { v };
            cache.insert(k, v.clone()).unwrap();
        }
        fx.cache = cache;
        // generated text now sits on the claim image, far from the caption
        assert!(fx.verify().is_err());
    }
}
