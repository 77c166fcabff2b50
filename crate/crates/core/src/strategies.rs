//! The two defenses against polluted evidence.
//!
//! Cross-modal reranking orders text evidence by cosine to the claim image
//! and image evidence by cosine to the claim caption. Cross-modal
//! claim-evidence reasoning picks the text evidence closest to the caption
//! and checks it against the claim image.
//!
//! Every ordering uses the total key (score descending, id ascending).

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Modality;
use crate::embedding::{cosine, EmbeddingError, EmbeddingVector};

/// Default number of text evidence items passed on after reranking.
pub const DEFAULT_K_TEXT: usize = 1;
/// Default number of image evidence items passed on after reranking.
pub const DEFAULT_K_IMAGE: usize = 5;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("duplicate candidate id `{0}`")]
    DuplicateId(String),
    #[error("no candidate evidence")]
    EmptyCandidates,
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub evidence_id: String,
    pub score: f64,
}

/// Evidence ids with non-increasing scores; ties in ascending id order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.evidence_id.as_str()).collect()
    }

    pub fn top(&self) -> Option<&RankedEntry> {
        self.entries.first()
    }
}

fn rank_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.evidence_id.cmp(&b.evidence_id))
}

/// Scores every candidate by cosine to `query` and sorts by the rank key.
pub fn rank_by_cosine(
    query: &EmbeddingVector,
    candidates: &[(&str, &EmbeddingVector)],
) -> Result<RankedList, StrategyError> {
    let mut seen = HashSet::with_capacity(candidates.len());
    let mut entries = Vec::with_capacity(candidates.len());
    for &(id, vector) in candidates {
        if !seen.insert(id) {
            return Err(StrategyError::DuplicateId(id.to_string()));
        }
        entries.push(RankedEntry { evidence_id: id.to_string(), score: cosine(query, vector)? });
    }
    entries.sort_by(rank_order);
    Ok(RankedList { entries })
}

/// Orders text evidence by cross-modal similarity to the claim image.
pub fn rerank_text_evidence(
    claim_image: &EmbeddingVector,
    texts: &[(&str, &EmbeddingVector)],
) -> Result<RankedList, StrategyError> {
    rank_by_cosine(claim_image, texts)
}

/// Orders image evidence by cross-modal similarity to the claim caption.
pub fn rerank_image_evidence(
    claim_caption: &EmbeddingVector,
    images: &[(&str, &EmbeddingVector)],
) -> Result<RankedList, StrategyError> {
    rank_by_cosine(claim_caption, images)
}

/// First `min(k, len)` entries, order preserved.
pub fn take_top_k(ranked: &RankedList, k: usize) -> Result<RankedList, StrategyError> {
    if k == 0 {
        return Err(StrategyError::InvalidK);
    }
    Ok(RankedList { entries: ranked.entries.iter().take(k).cloned().collect() })
}

/// Outcome of claim-evidence reasoning.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningSelection {
    pub selected_text_id: String,
    /// Cosine between the selected text and the claim caption.
    pub intra_modal_score: f64,
    /// Cosine between the selected text and the claim image.
    pub consistency_score: f64,
}

/// Selects the text evidence most similar to the caption (ties to the
/// smallest id) and scores its consistency with the claim image.
///
/// Consistency is cosine in the shared space; richer checkers can be plugged
/// in at the detector level.
pub fn reason_claim_evidence(
    claim_caption: &EmbeddingVector,
    claim_image: &EmbeddingVector,
    texts: &[(&str, &EmbeddingVector)],
) -> Result<ReasoningSelection, StrategyError> {
    let mut best: Option<(&str, &EmbeddingVector, f64)> = None;
    for &(id, vector) in texts {
        let score = cosine(claim_caption, vector)?;
        best = match best {
            Some((bid, _, bscore)) if bscore > score || (bscore == score && bid <= id) => best,
            _ => Some((id, vector, score)),
        };
    }
    let (id, vector, intra) = best.ok_or(StrategyError::EmptyCandidates)?;
    Ok(ReasoningSelection {
        selected_text_id: id.to_string(),
        intra_modal_score: intra,
        consistency_score: cosine(vector, claim_image)?,
    })
}

/// One line of the ranking audit export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub claim_id: String,
    pub modality: Modality,
    /// 1-based.
    pub rank: usize,
    pub evidence_id: String,
    pub score: f64,
}

pub fn rank_records(claim_id: &str, modality: Modality, ranked: &RankedList) -> Vec<RankRecord> {
    ranked
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| RankRecord {
            claim_id: claim_id.to_string(),
            modality,
            rank: i + 1,
            evidence_id: e.evidence_id.clone(),
            score: e.score,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn text_rerank_example() {
        let (a, b, c) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.6, 0.8]));
        let ranked = rerank_text_evidence(&v(&[1.0, 0.0]), &[("a", &a), ("b", &b), ("c", &c)]).unwrap();
        assert_eq!(ranked.ids(), ["a", "c", "b"]);
        let scores: Vec<f64> = ranked.entries().iter().map(|e| e.score).collect();
        assert_eq!(scores[0], 1.0);
        assert!((scores[1] - 0.6).abs() < 1e-7);
        assert_eq!(scores[2], 0.0);
    }

    #[test]
    fn ties_break_by_id() {
        let x = v(&[1.0, 0.0]);
        let ranked = rerank_text_evidence(&v(&[1.0, 0.0]), &[("b", &x), ("a", &x)]).unwrap();
        assert_eq!(ranked.ids(), ["a", "b"]);
    }

    #[test]
    fn empty_and_singleton() {
        assert!(rerank_text_evidence(&v(&[1.0]), &[]).unwrap().is_empty());
        let y = v(&[0.3, 0.4]);
        let ranked = rerank_image_evidence(&v(&[0.0, 1.0]), &[("y", &y)]).unwrap();
        assert_eq!(ranked.len(), 1);
        assert!((ranked.top().unwrap().score - 0.8).abs() < 1e-7);
    }

    #[test]
    fn image_rerank_and_query_scaling() {
        let (x, y) = (v(&[0.0, 1.0]), v(&[1.0, 0.0]));
        let a = rerank_image_evidence(&v(&[0.0, 1.0]), &[("x", &x), ("y", &y)]).unwrap();
        assert_eq!(a.ids(), ["x", "y"]);
        assert_eq!(a.entries()[0].score, 1.0);
        assert_eq!(a.entries()[1].score, 0.0);
        let b = rerank_image_evidence(&v(&[0.0, 5.0]), &[("x", &x), ("y", &y)]).unwrap();
        assert_eq!(a.ids(), b.ids());
    }

    #[test]
    fn dimension_mismatch_and_duplicates() {
        let a = v(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            rerank_text_evidence(&v(&[1.0, 0.0]), &[("a", &a)]),
            Err(StrategyError::Embedding(EmbeddingError::DimensionMismatch { .. }))
        ));
        let b = v(&[1.0, 0.0]);
        assert!(matches!(
            rerank_text_evidence(&v(&[1.0, 0.0]), &[("a", &b), ("a", &b)]),
            Err(StrategyError::DuplicateId(_))
        ));
    }

    #[test]
    fn top_k() {
        let vs: Vec<EmbeddingVector> = (0..10).map(|i| v(&[1.0, i as f32])).collect();
        let ids: Vec<String> = (0..10).map(|i| format!("e{i}")).collect();
        let cands: Vec<(&str, &EmbeddingVector)> = ids.iter().map(|s| s.as_str()).zip(vs.iter()).collect();
        let ranked = rank_by_cosine(&v(&[1.0, 0.0]), &cands).unwrap();
        let top1 = take_top_k(&ranked, 1).unwrap();
        assert_eq!(top1.ids(), ["e0"]);
        let three = take_top_k(&take_top_k(&ranked, 3).unwrap(), 5).unwrap();
        assert_eq!(three.len(), 3);
        assert!(matches!(take_top_k(&ranked, 0), Err(StrategyError::InvalidK)));
        assert_eq!((DEFAULT_K_TEXT, DEFAULT_K_IMAGE), (1, 5));
    }

    #[test]
    fn reasoning_example() {
        let (a, b) = (v(&[0.9, 0.1]), v(&[0.0, 1.0]));
        let sel = reason_claim_evidence(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &[("a", &a), ("b", &b)]).unwrap();
        assert_eq!(sel.selected_text_id, "a");
        // 0.1 / sqrt(0.82)
        let expected = 0.1f64 / 0.82f64.sqrt();
        assert!((sel.consistency_score - expected).abs() < 1e-6);
        assert!((sel.consistency_score - 0.1104).abs() < 1e-4);
    }

    #[test]
    fn reasoning_ties_and_singleton() {
        let x = v(&[0.2, 0.7]);
        let sel = reason_claim_evidence(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &[("z", &x), ("m", &x), ("q", &x)]).unwrap();
        assert_eq!(sel.selected_text_id, "m");
        let far = v(&[-1.0, 0.0]);
        let sel = reason_claim_evidence(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &[("only", &far)]).unwrap();
        assert_eq!(sel.selected_text_id, "only");
        assert!(matches!(reason_claim_evidence(&v(&[1.0]), &v(&[1.0]), &[]), Err(StrategyError::EmptyCandidates)));
    }

    #[test]
    fn records_are_one_based() {
        let x = v(&[1.0]);
        let ranked = rank_by_cosine(&x, &[("e", &x)]).unwrap();
        let recs = rank_records("c1", Modality::Text, &ranked);
        assert_eq!(recs[0].rank, 1);
        assert_eq!(recs[0].claim_id, "c1");
    }
}
