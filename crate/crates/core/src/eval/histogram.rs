use std::collections::HashMap;
use std::fmt::Write as _;

use super::EvalError;
use crate::corpus::{Corpus, EvidenceItem, Modality};
use crate::embedding::{cosine, evidence_key, image_key, EmbeddingCache, EmbeddingVector};
use crate::pollution::source_id;

/// Fixed-width bins over `[lo, hi]`: left-closed, right-open except the last
/// bin, which also holds `hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub out_of_range: usize,
}

impl Histogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self, EvalError> {
        if bins == 0 {
            return Err(EvalError::Histogram("at least one bin required".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(EvalError::Histogram(format!("invalid range [{lo}, {hi}]")));
        }
        Ok(Histogram { lo, hi, counts: vec![0; bins], out_of_range: 0 })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Lower edge of bin `i`; `edge(bins)` is `hi`.
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.bins() {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * i as f64 / self.bins() as f64
    }

    pub fn add(&mut self, value: f64) {
        if !(self.lo..=self.hi).contains(&value) {
            self.out_of_range += 1;
            return;
        }
        let last = self.bins() - 1;
        let guess = ((value - self.lo) / (self.hi - self.lo) * self.bins() as f64).floor();
        let mut i = (guess.max(0.0) as usize).min(last);
        // settle rounding at the edges against the same edges the CSV reports
        while i > 0 && value < self.edge(i) {
            i -= 1;
        }
        while i < last && value >= self.edge(i + 1) {
            i += 1;
        }
        self.counts[i] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.out_of_range
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{:.6},{:.6},{c}", self.edge(i), self.edge(i + 1));
        }
        out
    }
}

pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram, EvalError> {
    let mut h = Histogram::new(bins, lo, hi)?;
    for &v in values {
        h.add(v);
    }
    Ok(h)
}

/// One claim image with a clean evidence vector and the generated vector
/// derived from it.
#[derive(Debug, Clone, Copy)]
pub struct DeltaPair<'a> {
    pub claim_image: &'a EmbeddingVector,
    pub clean: &'a EmbeddingVector,
    pub generated: &'a EmbeddingVector,
}

impl DeltaPair<'_> {
    /// `cos(claim image, generated) - cos(claim image, clean)`.
    pub fn delta(&self) -> Result<f64, EvalError> {
        Ok(cosine(self.claim_image, self.generated)? - cosine(self.claim_image, self.clean)?)
    }
}

pub fn similarity_delta_histogram(
    pairs: &[DeltaPair<'_>],
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Histogram, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairing);
    }
    let deltas = pairs.iter().map(DeltaPair::delta).collect::<Result<Vec<_>, _>>()?;
    histogram(&deltas, bins, lo, hi)
}

/// Pairs each generated pool item of `modality` with the clean item it was
/// derived from. Pairs with a missing embedding or a source not in `corpus`
/// are skipped; the count of skipped items is returned alongside.
pub fn pair_generated_with_sources<'a>(
    corpus: &'a Corpus,
    pool: &'a [EvidenceItem],
    cache: &'a EmbeddingCache,
    modality: Modality,
) -> (Vec<DeltaPair<'a>>, usize) {
    let clean: HashMap<&str, &EvidenceItem> = corpus
        .evidence()
        .iter()
        .filter(|e| e.is_clean() && e.modality == modality)
        .map(|e| (e.id.as_str(), e))
        .collect();
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for item in pool.iter().filter(|e| e.modality == modality) {
        let found = source_id(&item.id).and_then(|src| clean.get(src)).and_then(|src| {
            Some(DeltaPair {
                claim_image: cache.get(&image_key(&src.claim_id))?,
                clean: cache.get(&evidence_key(&src.id))?,
                generated: cache.get(&evidence_key(&item.id))?,
            })
        });
        match found {
            Some(p) => pairs.push(p),
            None => skipped += 1,
        }
    }
    (pairs, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_binned_example() {
        let h = histogram(&[-0.1, 0.0, 0.1], 2, -0.1, 0.1).unwrap();
        assert_eq!(h.counts, [1, 2]);
        assert_eq!(h.out_of_range, 0);
    }

    #[test]
    fn conservation_with_out_of_range() {
        let values: Vec<f64> = (0..200).map(|i| -1.5 + i as f64 * 0.015).collect();
        let h = histogram(&values, 7, -1.0, 1.0).unwrap();
        assert_eq!(h.total(), values.len());
        assert!(h.out_of_range > 0);
    }

    #[test]
    fn identical_pairs_give_zero_delta() {
        let a = EmbeddingVector::new(vec![1.0, 0.2]).unwrap();
        let b = EmbeddingVector::new(vec![0.3, 0.9]).unwrap();
        let pairs = vec![DeltaPair { claim_image: &a, clean: &b, generated: &b }; 3];
        let h = similarity_delta_histogram(&pairs, 4, -1.0, 1.0).unwrap();
        assert_eq!(h.counts, [0, 0, 3, 0]);
        assert!(matches!(similarity_delta_histogram(&[], 4, -1.0, 1.0), Err(EvalError::EmptyPairing)));
    }

    #[test]
    fn csv_layout() {
        let h = histogram(&[0.25], 2, 0.0, 1.0).unwrap();
        assert_eq!(h.to_csv(), "bin_lo,bin_hi,count\n0.000000,0.500000,1\n0.500000,1.000000,0\n");
        assert!(Histogram::new(0, 0.0, 1.0).is_err());
        assert!(Histogram::new(1, 1.0, 1.0).is_err());
    }
}
