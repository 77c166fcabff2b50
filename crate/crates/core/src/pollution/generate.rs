//! Text and image generators, real (sidecar) and mock.

use std::path::{Path, PathBuf};

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, TextKind};
use super::PollutionError;
use crate::corpus::PollutionKind;
use crate::images::ImageResolver;
use crate::seeding;
use crate::sidecar::{DecodingParams, GenerateImageRequest, GenerateTextRequest, SidecarClient};

/// One generation call: what was asked, what came back, and who answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// Clean evidence item (or claim) the generation was derived from.
    pub source_id: String,
    /// Id of the generated evidence item.
    pub evidence_id: String,
    pub prompt: String,
    pub kind: PollutionKind,
    /// Generated text, or the reference of the generated image.
    pub output_ref: String,
    pub generator_tag: String,
}

pub trait TextGenerator: Send + Sync {
    fn tag(&self) -> String;
    /// Returns the raw generation; may be empty, which callers treat as a
    /// failed attempt.
    fn generate(&self, caption: &str, kind: TextKind, prompt: &str, seed: u64) -> Result<String, PollutionError>;
}

pub trait ImageGenerator: Send + Sync {
    fn tag(&self) -> String;
    /// Produces a variation of `source_ref` and returns its reference.
    fn vary(&self, source_ref: &str, seed: u64) -> Result<String, PollutionError>;
}

/// Builds the prompt, calls the generator, and retries once on an empty
/// answer.
pub fn generate_text(
    source_id: &str,
    evidence_id: &str,
    caption: &str,
    kind: TextKind,
    generator: &dyn TextGenerator,
    seed: u64,
) -> Result<GenerationRecord, PollutionError> {
    let prompt = build_prompt(caption, kind)?;
    for _ in 0..2 {
        let text = generator.generate(caption, kind, &prompt, seed)?;
        if !text.trim().is_empty() {
            return Ok(GenerationRecord {
                source_id: source_id.to_string(),
                evidence_id: evidence_id.to_string(),
                prompt,
                kind: kind.into(),
                output_ref: text,
                generator_tag: generator.tag(),
            });
        }
    }
    Err(PollutionError::EmptyGeneration(source_id.to_string()))
}

pub fn generate_image(
    source_id: &str,
    evidence_id: &str,
    image_ref: &str,
    generator: &dyn ImageGenerator,
    seed: u64,
) -> Result<GenerationRecord, PollutionError> {
    let output_ref = generator.vary(image_ref, seed)?;
    Ok(GenerationRecord {
        source_id: source_id.to_string(),
        evidence_id: evidence_id.to_string(),
        prompt: String::new(),
        kind: PollutionKind::ImageVariation,
        output_ref,
        generator_tag: generator.tag(),
    })
}

/// Deterministic stand-in for an LLM. The output starts with a kind marker,
/// `[ENTITY:…]`, `[SUPPORT:…]` or `[REFUTE:…]`, followed by a templated
/// rewrite of the caption.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTextGenerator;

impl MockTextGenerator {
    pub fn marker(kind: TextKind) -> &'static str {
        match kind {
            TextKind::Entity => "[ENTITY:",
            TextKind::Support => "[SUPPORT:",
            TextKind::Refute => "[REFUTE:",
        }
    }
}

impl TextGenerator for MockTextGenerator {
    fn tag(&self) -> String {
        "mock-text".into()
    }

    fn generate(&self, caption: &str, kind: TextKind, _prompt: &str, seed: u64) -> Result<String, PollutionError> {
        let tag = seeding::hex_tag(&[caption.as_bytes(), kind.as_str().as_bytes(), &seed.to_le_bytes()], 8);
        let caption = caption.trim().trim_end_matches('.');
        let body = match kind {
            TextKind::Entity => format!("A short profile of the main subject of \"{caption}\"."),
            TextKind::Support => format!("Several reports confirm that {caption}."),
            TextKind::Refute => format!("Several reports dispute that {caption}."),
        };
        Ok(format!("{}{tag}] {body}", Self::marker(kind)))
    }
}

fn derived_reference(source_ref: &str, seed: u64, dir: Option<&str>) -> String {
    let path = Path::new(source_ref);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let tag = seeding::hex_tag(&[source_ref.as_bytes(), &seed.to_le_bytes()], 12);
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.var-{tag}.{ext}"),
        None => format!("{stem}.var-{tag}"),
    };
    match (dir, path.parent().filter(|p| !p.as_os_str().is_empty())) {
        (Some(d), _) => format!("{d}/{name}"),
        (None, Some(parent)) => format!("{}/{name}", parent.display()),
        (None, None) => name,
    }
}

/// Deterministic stand-in for an image-variation model: derives a new
/// reference from the source reference and seed. With a file-checking
/// resolver the source bytes are copied to the derived path so the new
/// reference resolves too.
#[derive(Debug, Clone, Default)]
pub struct MockImageGenerator {
    resolver: ImageResolver,
}

impl MockImageGenerator {
    pub fn new(resolver: ImageResolver) -> Self {
        MockImageGenerator { resolver }
    }
}

impl ImageGenerator for MockImageGenerator {
    fn tag(&self) -> String {
        "mock-image".into()
    }

    fn vary(&self, source_ref: &str, seed: u64) -> Result<String, PollutionError> {
        let source =
            self.resolver.resolve(source_ref).ok_or_else(|| PollutionError::Unresolved(source_ref.to_string()))?;
        let derived = derived_reference(source_ref, seed, None);
        if let Some(root) = self.resolver.root() {
            let target = root.join(&derived);
            std::fs::copy(&source, &target)
                .map_err(|e| PollutionError::Client(format!("{}: {e}", target.display())))?;
        }
        Ok(derived)
    }
}

/// Text generation through the sidecar. The sidecar builds the prompt from
/// `(caption, kind)` itself; decoding parameters travel with each request.
#[derive(Debug, Clone)]
pub struct RemoteTextGenerator {
    client: SidecarClient,
    decoding: DecodingParams,
}

impl RemoteTextGenerator {
    pub fn new(client: SidecarClient, decoding: DecodingParams) -> Self {
        RemoteTextGenerator { client, decoding }
    }
}

impl TextGenerator for RemoteTextGenerator {
    fn tag(&self) -> String {
        format!("remote-text@{}", self.client.base_url())
    }

    fn generate(&self, caption: &str, kind: TextKind, _prompt: &str, seed: u64) -> Result<String, PollutionError> {
        let request = GenerateTextRequest {
            caption: caption.to_string(),
            kind: kind.as_str().to_string(),
            seed,
            decoding: self.decoding,
        };
        self.client.generate_text(&request).map(|r| r.text).map_err(|e| PollutionError::Client(e.to_string()))
    }
}

/// Image variation through the sidecar. Outputs are written under
/// `<root>/<out_subdir>/` and returned as references relative to the root.
#[derive(Debug, Clone)]
pub struct RemoteImageGenerator {
    client: SidecarClient,
    resolver: ImageResolver,
    out_subdir: String,
}

impl RemoteImageGenerator {
    pub fn new(client: SidecarClient, root: impl Into<PathBuf>, out_subdir: impl Into<String>) -> Self {
        RemoteImageGenerator { client, resolver: ImageResolver::new(root), out_subdir: out_subdir.into() }
    }
}

impl ImageGenerator for RemoteImageGenerator {
    fn tag(&self) -> String {
        format!("remote-image@{}", self.client.base_url())
    }

    fn vary(&self, source_ref: &str, seed: u64) -> Result<String, PollutionError> {
        let b64 = base64::engine::general_purpose::STANDARD;
        let bytes = self.resolver.read(source_ref).ok_or_else(|| PollutionError::Unresolved(source_ref.to_string()))?;
        let request = GenerateImageRequest { image_b64: b64.encode(bytes), seed, prompt: None };
        let response = self.client.generate_image(&request).map_err(|e| PollutionError::Client(e.to_string()))?;
        let out = b64
            .decode(response.image_b64.as_bytes())
            .map_err(|e| PollutionError::Client(format!("undecodable image payload: {e}")))?;
        let reference = derived_reference(source_ref, seed, Some(&self.out_subdir));
        let root = self.resolver.root().expect("remote generator always has a root");
        let target = root.join(&reference);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent).map_err(|e| PollutionError::Client(e.to_string()))?;
        }
        std::fs::write(&target, out).map_err(|e| PollutionError::Client(format!("{}: {e}", target.display())))?;
        Ok(reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn mock_text_is_deterministic_and_marked() {
        let g = MockTextGenerator;
        let a = generate_text("s", "g", "Flood hits town", TextKind::Entity, &g, 5).unwrap();
        let b = generate_text("s", "g", "Flood hits town", TextKind::Entity, &g, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.output_ref.starts_with("[ENTITY:"));
        let r = generate_text("s", "g", "Flood hits town", TextKind::Refute, &g, 5).unwrap();
        assert!(r.output_ref.starts_with("[REFUTE:"));
        assert_eq!(r.kind, PollutionKind::Refute);
        assert_eq!(r.prompt, build_prompt("Flood hits town", TextKind::Refute).unwrap());
        let other_seed = generate_text("s", "g", "Flood hits town", TextKind::Entity, &g, 6).unwrap();
        assert_ne!(a.output_ref, other_seed.output_ref);
    }

    struct Empty(AtomicUsize);

    impl TextGenerator for Empty {
        fn tag(&self) -> String {
            "empty".into()
        }
        fn generate(&self, _: &str, _: TextKind, _: &str, _: u64) -> Result<String, PollutionError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(String::new())
        }
    }

    #[test]
    fn empty_generation_retried_once_then_fails() {
        let g = Empty(AtomicUsize::new(0));
        let err = generate_text("e1", "g1", "caption", TextKind::Support, &g, 1).unwrap_err();
        assert!(matches!(err, PollutionError::EmptyGeneration(ref id) if id == "e1"));
        assert_eq!(g.0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn mock_image_reference_is_stable() {
        let g = MockImageGenerator::default();
        let a = g.vary("img/a.png", 7).unwrap();
        assert_eq!(a, g.vary("img/a.png", 7).unwrap());
        assert!(a.starts_with("img/a.var-") && a.ends_with(".png"));
        assert_ne!(a, g.vary("img/a.png", 8).unwrap());
    }

    #[test]
    fn mock_image_unresolvable_source() {
        let dir = tempfile::tempdir().unwrap();
        let g = MockImageGenerator::new(ImageResolver::new(dir.path()));
        let err = g.vary("img/missing.png", 7).unwrap_err();
        assert!(err.to_string().contains("img/missing.png"));
    }

    #[test]
    fn mock_image_output_resolves_with_file_resolver() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.png"), b"\x89PNG").unwrap();
        let resolver = ImageResolver::new(dir.path());
        let out = MockImageGenerator::new(resolver.clone()).vary("a.png", 7).unwrap();
        assert_eq!(resolver.read(&out).unwrap(), b"\x89PNG");
    }
}
