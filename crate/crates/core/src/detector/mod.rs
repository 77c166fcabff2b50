//! Reference out-of-context detector.
//!
//! Three branches score a claim: image-caption consistency, textual
//! evidence (claim image vs selected texts) and visual evidence (claim
//! caption vs selected images). With the reasoning strategy a fourth branch
//! adds the claim-evidence consistency score. Components are fused by a
//! weighted mean over the branches actually computed and thresholded into a
//! verdict.

mod llm_prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use llm_prompt::{build_llm_verdict_prompt, parse_llm_verdict, LlmPrompt};

use crate::corpus::{Claim, Corpus, Label, Modality};
use crate::embedding::{caption_key, cosine, evidence_key, image_key, EmbeddingCache, EmbeddingError, EmbeddingVector};
use crate::strategies::{
    reason_claim_evidence, rerank_image_evidence, rerank_text_evidence, take_top_k, StrategyError, DEFAULT_K_IMAGE,
    DEFAULT_K_TEXT,
};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error("claim `{0}` has no {1} embedding")]
    MissingClaimEmbedding(String, &'static str),
    #[error("no present component carries positive weight")]
    NoWeightedComponent,
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("threshold calibration needs both labels in the validation split")]
    SingleClass,
    #[error("threshold calibration needs a non-empty validation split")]
    EmptyValidation,
    #[error("unparseable verdict response: {0:?}")]
    UnparseableVerdict(String),
}

/// Which defenses are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    None,
    Rerank,
    Reason,
    Both,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::None, Strategy::Rerank, Strategy::Reason, Strategy::Both];

    pub fn reranks(self) -> bool {
        matches!(self, Strategy::Rerank | Strategy::Both)
    }

    pub fn reasons(self) -> bool {
        matches!(self, Strategy::Reason | Strategy::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Rerank => "rerank",
            Strategy::Reason => "reason",
            Strategy::Both => "both",
        }
    }

    /// Row label used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Strategy::None => "None",
            Strategy::Rerank => "Cross-modal Reranking",
            Strategy::Reason => "Cross-modal Reasoning",
            Strategy::Both => "Both",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| DetectorError::Config(format!("unknown strategy `{s}` (expected none|rerank|reason|both)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Consistency,
    Textual,
    Visual,
    Reasoning,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentWeights {
    pub consistency: f64,
    pub textual: f64,
    pub visual: f64,
    pub reasoning: f64,
}

impl Default for ComponentWeights {
    fn default() -> Self {
        ComponentWeights { consistency: 1.0, textual: 1.0, visual: 1.0, reasoning: 1.0 }
    }
}

impl ComponentWeights {
    pub fn get(&self, c: Component) -> f64 {
        match c {
            Component::Consistency => self.consistency,
            Component::Textual => self.textual,
            Component::Visual => self.visual,
            Component::Reasoning => self.reasoning,
        }
    }

    fn all(&self) -> [f64; 4] {
        [self.consistency, self.textual, self.visual, self.reasoning]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub weights: ComponentWeights,
    pub threshold: f64,
    pub k_text: usize,
    pub k_image: usize,
    pub strategy: Strategy,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            weights: ComponentWeights::default(),
            threshold: 0.5,
            k_text: DEFAULT_K_TEXT,
            k_image: DEFAULT_K_IMAGE,
            strategy: Strategy::None,
        }
    }
}

impl DetectorConfig {
    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        DetectorConfig { strategy, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let w = self.weights.all();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(DetectorError::Config("weights must be finite and non-negative".into()));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(DetectorError::Config("at least one weight must be positive".into()));
        }
        // fused scores are weighted means of cosines
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(DetectorError::Config(format!("threshold {} outside [-1, 1]", self.threshold)));
        }
        if self.k_text == 0 || self.k_image == 0 {
            return Err(DetectorError::Config("k_text and k_image must be at least 1".into()));
        }
        Ok(())
    }
}

/// A claim with its embeddings and the embedded evidence of each modality in
/// manifest order.
#[derive(Debug, Clone)]
pub struct ClaimEvidence<'a> {
    pub claim_id: &'a str,
    pub caption: &'a EmbeddingVector,
    pub image: &'a EmbeddingVector,
    pub texts: Vec<(&'a str, &'a EmbeddingVector)>,
    pub images: Vec<(&'a str, &'a EmbeddingVector)>,
}

impl<'a> ClaimEvidence<'a> {
    /// Looks the claim and its evidence up in the cache. Evidence without an
    /// embedding is dropped and counted in the second return value; a claim
    /// without caption or image embedding is an error.
    pub fn from_cache(
        corpus: &'a Corpus,
        cache: &'a EmbeddingCache,
        claim: &'a Claim,
    ) -> Result<(Self, usize), DetectorError> {
        let caption = cache
            .get(&caption_key(&claim.id))
            .ok_or_else(|| DetectorError::MissingClaimEmbedding(claim.id.clone(), "caption"))?;
        let image = cache
            .get(&image_key(&claim.id))
            .ok_or_else(|| DetectorError::MissingClaimEmbedding(claim.id.clone(), "image"))?;
        let mut missing = 0;
        let mut texts = Vec::new();
        let mut images = Vec::new();
        for item in corpus.evidence_for(&claim.id) {
            match cache.get(&evidence_key(&item.id)) {
                Some(v) => match item.modality {
                    Modality::Text => texts.push((item.id.as_str(), v)),
                    Modality::Image => images.push((item.id.as_str(), v)),
                },
                None => missing += 1,
            }
        }
        Ok((ClaimEvidence { claim_id: &claim.id, caption, image, texts, images }, missing))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub claim_id: String,
    pub predicted: Label,
    pub fused_score: f64,
    pub components: BTreeMap<Component, f64>,
    pub selected_evidence: Vec<String>,
    pub strategy: Strategy,
}

/// Weighted mean over the present components; weights of absent components
/// drop out and the rest are renormalized.
pub fn fuse(components: &BTreeMap<Component, f64>, weights: &ComponentWeights) -> Result<f64, DetectorError> {
    let total: f64 = components.keys().map(|&c| weights.get(c)).sum();
    if total <= 0.0 {
        return Err(DetectorError::NoWeightedComponent);
    }
    Ok(components.iter().map(|(&c, &x)| weights.get(c) * x).sum::<f64>() / total)
}

fn mean_cosine(query: &EmbeddingVector, picked: &[&EmbeddingVector]) -> Result<f64, DetectorError> {
    let mut sum = 0.0;
    for v in picked {
        sum += cosine(query, v)?;
    }
    Ok(sum / picked.len() as f64)
}

type RankFn = fn(&EmbeddingVector, &[(&str, &EmbeddingVector)]) -> Result<crate::strategies::RankedList, StrategyError>;

/// Picks up to `k` items: reranked by cosine to `query`, or the first `k` in
/// manifest order.
fn select<'a>(
    rerank: bool,
    query: &EmbeddingVector,
    items: &[(&'a str, &'a EmbeddingVector)],
    k: usize,
    rank: RankFn,
) -> Result<Vec<(&'a str, &'a EmbeddingVector)>, DetectorError> {
    if !rerank {
        return Ok(items.iter().take(k).copied().collect());
    }
    let top = take_top_k(&rank(query, items)?, k)?;
    Ok(top
        .entries()
        .iter()
        .map(|e| *items.iter().find(|(id, _)| *id == e.evidence_id).expect("ranked ids come from items"))
        .collect())
}

pub fn detect(input: &ClaimEvidence<'_>, config: &DetectorConfig) -> Result<Verdict, DetectorError> {
    config.validate()?;
    let strategy = config.strategy;
    let mut components = BTreeMap::new();
    let mut selected = Vec::new();

    components.insert(Component::Consistency, cosine(input.image, input.caption)?);

    if !input.texts.is_empty() {
        let picked = select(strategy.reranks(), input.image, &input.texts, config.k_text, rerank_text_evidence)?;
        let vecs: Vec<&EmbeddingVector> = picked.iter().map(|(_, v)| *v).collect();
        components.insert(Component::Textual, mean_cosine(input.image, &vecs)?);
        selected.extend(picked.iter().map(|(id, _)| id.to_string()));
    }
    if !input.images.is_empty() {
        let picked = select(strategy.reranks(), input.caption, &input.images, config.k_image, rerank_image_evidence)?;
        let vecs: Vec<&EmbeddingVector> = picked.iter().map(|(_, v)| *v).collect();
        components.insert(Component::Visual, mean_cosine(input.caption, &vecs)?);
        selected.extend(picked.iter().map(|(id, _)| id.to_string()));
    }
    if strategy.reasons() && !input.texts.is_empty() {
        let reasoning = reason_claim_evidence(input.caption, input.image, &input.texts)?;
        components.insert(Component::Reasoning, reasoning.consistency_score);
        if !selected.contains(&reasoning.selected_text_id) {
            selected.push(reasoning.selected_text_id);
        }
    }

    let fused_score = fuse(&components, &config.weights)?;
    Ok(Verdict {
        claim_id: input.claim_id.to_string(),
        predicted: Label::from_bool(fused_score >= config.threshold),
        fused_score,
        components,
        selected_evidence: selected,
        strategy,
    })
}

/// The threshold grid: -1.00 to 1.00 in steps of 0.01.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (-100..=100).map(|i| f64::from(i) / 100.0)
}

/// Picks the grid threshold with the best accuracy on `(fused score, label)`
/// pairs; ties go to the smallest threshold.
pub fn calibrate_from_scores(scored: &[(f64, Label)]) -> Result<f64, DetectorError> {
    if scored.is_empty() {
        return Err(DetectorError::EmptyValidation);
    }
    let has_true = scored.iter().any(|(_, l)| l.is_true());
    let has_false = scored.iter().any(|(_, l)| !l.is_true());
    if !(has_true && has_false) {
        return Err(DetectorError::SingleClass);
    }
    let mut best = (f64::NAN, 0usize);
    for tau in threshold_grid() {
        let correct = scored.iter().filter(|(s, l)| (*s >= tau) == l.is_true()).count();
        if best.0.is_nan() || correct > best.1 {
            best = (tau, correct);
        }
    }
    Ok(best.0)
}

/// Calibrates the decision threshold on the labeled claims of `validation`.
/// Claims lacking embeddings are skipped.
pub fn calibrate_threshold(
    config: &DetectorConfig,
    validation: &Corpus,
    cache: &EmbeddingCache,
) -> Result<f64, DetectorError> {
    let mut scored = Vec::new();
    for claim in validation.claims() {
        let Ok((input, _)) = ClaimEvidence::from_cache(validation, cache, claim) else {
            continue;
        };
        scored.push((detect(&input, config)?.fused_score, claim.label));
    }
    calibrate_from_scores(&scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    fn comps(pairs: &[(Component, f64)]) -> BTreeMap<Component, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn fusion_hand_cases() {
        let w = ComponentWeights::default();
        let c = comps(&[(Component::Consistency, 0.8), (Component::Textual, 0.4), (Component::Visual, 0.6)]);
        assert!((fuse(&c, &w).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(fuse(&comps(&[(Component::Consistency, 1.0), (Component::Textual, 1.0)]), &w).unwrap(), 1.0);
        assert_eq!(fuse(&comps(&[(Component::Consistency, 0.0)]), &w).unwrap(), 0.0);
    }

    #[test]
    fn renormalization_over_present_weights() {
        let w = ComponentWeights { consistency: 2.0, textual: 1.0, visual: 1.0, reasoning: 4.0 };
        // visual + reasoning absent: (2*0.9 + 1*0.3) / 3 = 0.7
        let c = comps(&[(Component::Consistency, 0.9), (Component::Textual, 0.3)]);
        assert!((fuse(&c, &w).unwrap() - 0.7).abs() < 1e-12);
        let zero = ComponentWeights { consistency: 0.0, textual: 1.0, visual: 0.0, reasoning: 0.0 };
        assert!(matches!(
            fuse(&comps(&[(Component::Consistency, 0.5)]), &zero),
            Err(DetectorError::NoWeightedComponent)
        ));
    }

    #[test]
    fn verdict_bounds() {
        let x = v(&[1.0, 0.0]);
        let input =
            ClaimEvidence { claim_id: "c", caption: &x, image: &x, texts: vec![("t", &x)], images: vec![("i", &x)] };
        let verdict = detect(&input, &DetectorConfig::default()).unwrap();
        assert_eq!(verdict.fused_score, 1.0);
        assert_eq!(verdict.predicted, Label::True);

        let y = v(&[0.0, 1.0]);
        let input =
            ClaimEvidence { claim_id: "c", caption: &x, image: &y, texts: vec![("t", &x)], images: vec![("i", &y)] };
        let verdict = detect(&input, &DetectorConfig::default()).unwrap();
        assert_eq!(verdict.fused_score, 0.0);
        assert_eq!(verdict.predicted, Label::False);
    }

    #[test]
    fn missing_modalities_are_omitted() {
        let x = v(&[1.0, 0.0]);
        let input = ClaimEvidence { claim_id: "c", caption: &x, image: &x, texts: vec![], images: vec![] };
        let verdict = detect(&input, &DetectorConfig::default().with_strategy(Strategy::Both)).unwrap();
        assert_eq!(verdict.components.keys().copied().collect::<Vec<_>>(), [Component::Consistency]);
    }

    #[test]
    fn strategies_select_differently() {
        let caption = v(&[1.0, 0.0, 0.0]);
        let image = v(&[0.0, 1.0, 0.0]);
        let (g, c) = (v(&[0.0, 0.0, 1.0]), v(&[0.0, 1.0, 0.0]));
        let input = ClaimEvidence {
            claim_id: "x",
            caption: &caption,
            image: &image,
            texts: vec![("gen", &g), ("clean", &c)],
            images: vec![],
        };
        let none = detect(&input, &DetectorConfig::default()).unwrap();
        assert_eq!(none.selected_evidence, ["gen"]);
        assert_eq!(none.components[&Component::Textual], 0.0);
        let rerank = detect(&input, &DetectorConfig::default().with_strategy(Strategy::Rerank)).unwrap();
        assert_eq!(rerank.selected_evidence, ["clean"]);
        assert_eq!(rerank.components[&Component::Textual], 1.0);
        let both = detect(&input, &DetectorConfig::default().with_strategy(Strategy::Both)).unwrap();
        assert!(both.components.contains_key(&Component::Reasoning));
        assert!(!none.components.contains_key(&Component::Reasoning));
    }

    #[test]
    fn calibration_grid_tie_rule() {
        let scored = [(0.9, Label::True), (0.9, Label::True), (0.1, Label::False), (0.1, Label::False)];
        assert_eq!(calibrate_from_scores(&scored).unwrap(), 0.11);
        assert_eq!(calibrate_from_scores(&scored).unwrap(), calibrate_from_scores(&scored).unwrap());
        assert!(matches!(calibrate_from_scores(&[(0.3, Label::True)]), Err(DetectorError::SingleClass)));
        assert!(matches!(calibrate_from_scores(&[]), Err(DetectorError::EmptyValidation)));
    }

    #[test]
    fn config_validation() {
        let weights = ComponentWeights { consistency: 0.0, textual: 0.0, visual: 0.0, reasoning: 0.0 };
        assert!(DetectorConfig { weights, ..DetectorConfig::default() }.validate().is_err());
        assert!(DetectorConfig { threshold: 1.5, ..DetectorConfig::default() }.validate().is_err());
        let cfg = DetectorConfig { k_text: 0, ..DetectorConfig::default() };
        assert!(cfg.validate().is_err());
        assert!("banana".parse::<Strategy>().is_err());
        assert_eq!("both".parse::<Strategy>().unwrap(), Strategy::Both);
    }

    #[test]
    fn verdict_serializes_component_names() {
        let x = v(&[1.0]);
        let input = ClaimEvidence { claim_id: "c", caption: &x, image: &x, texts: vec![], images: vec![] };
        let verdict = detect(&input, &DetectorConfig::default()).unwrap();
        let json = serde_json::to_value(&verdict).unwrap();
        assert_eq!(json["components"]["consistency"], 1.0);
        assert_eq!(json["predicted"], "true");
        assert_eq!(json["strategy"], "none");
    }
}
