//! Generated-evidence pollution: prompt construction, generation of a
//! polluted pool from clean evidence, and seeded injection of that pool into
//! a corpus at a controlled ratio.

mod generate;
mod prompt;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use thiserror::Error;

pub use generate::{
    generate_image, generate_text, GenerationRecord, ImageGenerator, MockImageGenerator, MockTextGenerator,
    RemoteImageGenerator, RemoteTextGenerator, TextGenerator,
};
pub use prompt::{build_prompt, TextKind};

use crate::corpus::{Corpus, CorpusError, EvidenceItem, Modality, PollutionKind, Provenance};
use crate::par::Exec;
use crate::seeding;

#[derive(Debug, Error)]
pub enum PollutionError {
    #[error("invalid pollution config: {0}")]
    Config(String),
    #[error("empty caption")]
    EmptyCaption,
    #[error("generator returned empty text twice for `{0}`")]
    EmptyGeneration(String),
    #[error("cannot resolve image reference `{0}`")]
    Unresolved(String),
    #[error("generator client failure: {0}")]
    Client(String),
    #[error("pool item `{evidence_id}` references unknown claim `{claim_id}`")]
    DanglingClaim { evidence_id: String, claim_id: String },
    #[error("pool item `{0}` is not generated evidence")]
    NotGenerated(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which generator family backs a pollution run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorKind {
    Remote,
    #[default]
    Mock,
}

/// Relative weights for sampling the text instruction applied to each clean
/// text item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KindWeights {
    pub entity: f64,
    pub support: f64,
    pub refute: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights { entity: 1.0, support: 1.0, refute: 1.0 }
    }
}

impl KindWeights {
    fn as_array(&self) -> [f64; 3] {
        [self.entity, self.support, self.refute]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PollutionConfig {
    /// Fraction of the eligible generated pool injected, per modality.
    pub ratio: f64,
    pub text: bool,
    pub image: bool,
    pub text_kinds: KindWeights,
    pub seed: u64,
    pub generator: GeneratorKind,
}

impl PollutionConfig {
    pub fn new(ratio: f64, seed: u64) -> Self {
        PollutionConfig {
            ratio,
            text: true,
            image: true,
            text_kinds: KindWeights::default(),
            seed,
            generator: GeneratorKind::Mock,
        }
    }

    pub fn with_modalities(mut self, text: bool, image: bool) -> Self {
        self.text = text;
        self.image = image;
        self
    }

    pub fn includes(&self, modality: Modality) -> bool {
        match modality {
            Modality::Text => self.text,
            Modality::Image => self.image,
        }
    }

    pub fn validate(&self) -> Result<(), PollutionError> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(PollutionError::Config(format!("ratio {} outside [0, 1]", self.ratio)));
        }
        if !self.text && !self.image {
            return Err(PollutionError::Config("no modality selected".into()));
        }
        let w = self.text_kinds.as_array();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(PollutionError::Config("kind weights must be non-negative with a positive sum".into()));
        }
        Ok(())
    }
}

/// Number of pool items injected for a pool of `eligible` items.
pub fn injected_count(ratio: f64, eligible: usize) -> usize {
    // the epsilon keeps decimal ratios such as 0.29 * 100 from flooring low
    ((ratio * eligible as f64 + 1e-9).floor() as usize).min(eligible)
}

/// Returns a new corpus holding everything in `corpus` plus
/// `injected_count(ratio, n)` generated items per selected modality, where
/// `n` is the number of pool items of that modality.
///
/// Selection takes a prefix of a seeded shuffle of the pool, so for a fixed
/// seed the items injected at a lower ratio are a subset of those injected
/// at a higher one. Injected items come first in each claim's evidence list,
/// in pool order, followed by the claim's existing evidence.
pub fn inject(corpus: &Corpus, pool: &[EvidenceItem], config: &PollutionConfig) -> Result<Corpus, PollutionError> {
    config.validate()?;
    for item in pool {
        if !corpus.contains_claim(&item.claim_id) {
            return Err(PollutionError::DanglingClaim {
                evidence_id: item.id.clone(),
                claim_id: item.claim_id.clone(),
            });
        }
        if item.provenance != Provenance::Generated {
            return Err(PollutionError::NotGenerated(item.id.clone()));
        }
    }

    let mut selected: HashSet<usize> = HashSet::new();
    for modality in [Modality::Text, Modality::Image] {
        if !config.includes(modality) {
            continue;
        }
        let mut eligible: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].modality == modality).collect();
        let take = injected_count(config.ratio, eligible.len());
        let mut rng = seeding::rng_for(&[b"inject", &config.seed.to_le_bytes(), modality.as_str().as_bytes()]);
        eligible.shuffle(&mut rng);
        selected.extend(eligible.into_iter().take(take));
    }
    if selected.is_empty() {
        return Ok(corpus.clone());
    }

    let mut evidence: Vec<EvidenceItem> =
        (0..pool.len()).filter(|i| selected.contains(i)).map(|i| pool[i].clone()).collect();
    evidence.extend(corpus.evidence().iter().cloned());
    Ok(Corpus::new(corpus.claims().to_vec(), evidence)?)
}

/// Output of a pool generation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeneratedPool {
    pub items: Vec<EvidenceItem>,
    pub records: Vec<GenerationRecord>,
    /// Source items whose generation failed, with the reason.
    pub failures: Vec<(String, String)>,
}

/// Id of the evidence item generated from `source_id`.
pub fn generated_id(source_id: &str, kind: PollutionKind) -> String {
    format!("{source_id}~gen-{kind}")
}

/// Source id encoded in a generated id, if `id` follows that scheme.
pub fn source_id(id: &str) -> Option<&str> {
    id.rsplit_once("~gen-").map(|(src, _)| src).filter(|src| !src.is_empty())
}

fn item_seed(seed: u64, source_id: &str) -> u64 {
    let d = seeding::digest(&[b"item-seed", &seed.to_le_bytes(), source_id.as_bytes()]);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

enum GenJob<'a> {
    Text { source: &'a EvidenceItem, caption: &'a str, kind: TextKind },
    Image { source: &'a EvidenceItem },
}

/// Generates one polluted item per clean evidence item of the selected
/// modalities: a text generation (instruction sampled from the kind weights)
/// for every clean text item, an image variation for every clean image item.
///
/// Kind sampling is sequential and seeded; generation calls fan out per
/// `exec`; outputs keep corpus order.
pub fn generate_pool(
    corpus: &Corpus,
    config: &PollutionConfig,
    text_generator: &dyn TextGenerator,
    image_generator: &dyn ImageGenerator,
    exec: Exec,
) -> Result<GeneratedPool, PollutionError> {
    config.validate()?;
    let weights = WeightedIndex::new(config.text_kinds.as_array())
        .map_err(|e| PollutionError::Config(format!("kind weights: {e}")))?;
    let mut rng = seeding::rng_for(&[b"kinds", &config.seed.to_le_bytes()]);

    let mut jobs = Vec::new();
    for item in corpus.evidence().iter().filter(|e| e.is_clean() && config.includes(e.modality)) {
        let claim = corpus.claim(&item.claim_id).expect("corpus invariant: claim resolves");
        jobs.push(match item.modality {
            Modality::Text => {
                GenJob::Text { source: item, caption: &claim.caption, kind: TextKind::ALL[weights.sample(&mut rng)] }
            }
            Modality::Image => GenJob::Image { source: item },
        });
    }

    let results = exec.map(&jobs, |job| match *job {
        GenJob::Text { source, caption, kind } => {
            let id = generated_id(&source.id, kind.into());
            generate_text(&source.id, &id, caption, kind, text_generator, item_seed(config.seed, &source.id))
                .map(|r| (source, Modality::Text, r))
                .map_err(|e| (source.id.clone(), e.to_string()))
        }
        GenJob::Image { source } => {
            let id = generated_id(&source.id, PollutionKind::ImageVariation);
            generate_image(&source.id, &id, &source.content, image_generator, item_seed(config.seed, &source.id))
                .map(|r| (source, Modality::Image, r))
                .map_err(|e| (source.id.clone(), e.to_string()))
        }
    });

    let mut pool = GeneratedPool::default();
    for result in results {
        match result {
            Ok((source, modality, record)) => {
                pool.items.push(EvidenceItem {
                    id: record.evidence_id.clone(),
                    claim_id: source.claim_id.clone(),
                    modality,
                    content: record.output_ref.clone(),
                    provenance: Provenance::Generated,
                    kind: record.kind,
                });
                pool.records.push(record);
            }
            Err(failure) => pool.failures.push(failure),
        }
    }
    Ok(pool)
}

pub fn write_generation_log(path: &Path, records: &[GenerationRecord]) -> Result<(), PollutionError> {
    let io = |source| PollutionError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_generation_log(path: &Path) -> Result<Vec<GenerationRecord>, PollutionError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| PollutionError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PollutionError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_id_inverts_generated_id() {
        let id = generated_id("ev~7", PollutionKind::Refute);
        assert_eq!(source_id(&id), Some("ev~7"));
        assert_eq!(source_id("plain"), None);
    }
    use crate::corpus::{corpus_stats, Claim, Label, Split};

    fn base_corpus(n_claims: usize) -> Corpus {
        let claims = (0..n_claims)
            .map(|i| Claim {
                id: format!("c{i:03}"),
                caption: format!("Caption number {i}"),
                image_ref: format!("img/c{i}.jpg"),
                label: if i % 2 == 0 { Label::True } else { Label::False },
                split: Split::Test,
            })
            .collect();
        let mut evidence = Vec::new();
        for i in 0..n_claims {
            for j in 0..2 {
                evidence.push(EvidenceItem {
                    id: format!("t{i:03}-{j}"),
                    claim_id: format!("c{i:03}"),
                    modality: Modality::Text,
                    content: format!("clean text {i}/{j}"),
                    provenance: Provenance::Clean,
                    kind: PollutionKind::None,
                });
                evidence.push(EvidenceItem {
                    id: format!("i{i:03}-{j}"),
                    claim_id: format!("c{i:03}"),
                    modality: Modality::Image,
                    content: format!("img/e{i}-{j}.jpg"),
                    provenance: Provenance::Clean,
                    kind: PollutionKind::None,
                });
            }
        }
        Corpus::new(claims, evidence).unwrap()
    }

    fn pool_for(corpus: &Corpus, seed: u64) -> GeneratedPool {
        generate_pool(
            corpus,
            &PollutionConfig::new(1.0, seed),
            &MockTextGenerator,
            &MockImageGenerator::default(),
            Exec::SEQUENTIAL,
        )
        .unwrap()
    }

    #[test]
    fn ratio_zero_is_identity() {
        let corpus = base_corpus(5);
        let pool = pool_for(&corpus, 1);
        let out = inject(&corpus, &pool.items, &PollutionConfig::new(0.0, 42)).unwrap();
        assert_eq!(out, corpus);
    }

    #[test]
    fn half_ratio_on_forty_text_items() {
        let corpus = base_corpus(20);
        let pool = pool_for(&corpus, 1);
        let text_pool: Vec<_> = pool.items.iter().filter(|e| e.modality == Modality::Text).cloned().collect();
        assert_eq!(text_pool.len(), 40);
        let cfg = PollutionConfig::new(0.5, 42).with_modalities(true, false);
        let a = inject(&corpus, &text_pool, &cfg).unwrap();
        let b = inject(&corpus, &text_pool, &cfg).unwrap();
        assert_eq!(corpus_stats(&a).row(Split::Test).generated_text, 20);
        assert_eq!(a, b);
    }

    #[test]
    fn full_injection_keeps_clean_counts() {
        let corpus = base_corpus(6);
        let pool = pool_for(&corpus, 3);
        let out = inject(&corpus, &pool.items, &PollutionConfig::new(1.0, 42)).unwrap();
        let before = corpus_stats(&corpus).row(Split::Test);
        let after = corpus_stats(&out).row(Split::Test);
        assert_eq!((after.clean_text, after.clean_image), (before.clean_text, before.clean_image));
        assert_eq!(after.generated_text, 12);
        assert_eq!(after.generated_image, 12);
    }

    #[test]
    fn injected_items_lead_each_claim() {
        let corpus = base_corpus(2);
        let pool = pool_for(&corpus, 3);
        let out = inject(&corpus, &pool.items, &PollutionConfig::new(1.0, 42)).unwrap();
        let first = out.evidence_for("c000").next().unwrap();
        assert_eq!(first.provenance, Provenance::Generated);
        let clean: Vec<_> = out.evidence_for("c000").filter(|e| e.is_clean()).map(|e| e.id.clone()).collect();
        let orig: Vec<_> = corpus.evidence_for("c000").map(|e| e.id.clone()).collect();
        assert_eq!(clean, orig);
    }

    #[test]
    fn dangling_pool_item_rejected() {
        let corpus = base_corpus(1);
        let mut pool = pool_for(&corpus, 3).items;
        pool[0].claim_id = "c999".into();
        let err = inject(&corpus, &pool, &PollutionConfig::new(0.5, 1)).unwrap_err();
        assert!(matches!(err, PollutionError::DanglingClaim { ref claim_id, .. } if claim_id == "c999"));
    }

    #[test]
    fn config_validation() {
        assert!(PollutionConfig::new(1.5, 0).validate().is_err());
        assert!(PollutionConfig::new(0.5, 0).with_modalities(false, false).validate().is_err());
        let mut cfg = PollutionConfig::new(0.5, 0);
        cfg.text_kinds = KindWeights { entity: 0.0, support: 0.0, refute: 0.0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pool_generation_is_deterministic_and_follows_weights() {
        let corpus = base_corpus(10);
        assert_eq!(pool_for(&corpus, 9), pool_for(&corpus, 9));
        let mut cfg = PollutionConfig::new(1.0, 9).with_modalities(true, false);
        cfg.text_kinds = KindWeights { entity: 0.0, support: 0.0, refute: 1.0 };
        let pool =
            generate_pool(&corpus, &cfg, &MockTextGenerator, &MockImageGenerator::default(), Exec::SEQUENTIAL).unwrap();
        assert_eq!(pool.items.len(), 20);
        assert!(pool.items.iter().all(|e| e.kind == PollutionKind::Refute));
        assert!(pool.records.iter().all(|r| r.prompt
            == build_prompt(
                &corpus
                    .claim(&corpus.evidence().iter().find(|e| e.id == r.source_id).unwrap().claim_id)
                    .unwrap()
                    .caption,
                TextKind::Refute
            )
            .unwrap()));
    }

    #[test]
    fn parallel_generation_matches_sequential() {
        let corpus = base_corpus(15);
        let cfg = PollutionConfig::new(1.0, 4);
        let seq =
            generate_pool(&corpus, &cfg, &MockTextGenerator, &MockImageGenerator::default(), Exec::SEQUENTIAL).unwrap();
        let par =
            generate_pool(&corpus, &cfg, &MockTextGenerator, &MockImageGenerator::default(), Exec::parallel(Some(4)))
                .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn generation_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pool = pool_for(&base_corpus(2), 1);
        let path = dir.path().join("log.jsonl");
        write_generation_log(&path, &pool.records).unwrap();
        assert_eq!(read_generation_log(&path).unwrap(), pool.records);
    }
}
