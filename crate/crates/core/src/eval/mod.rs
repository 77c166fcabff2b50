//! Robustness measurement: metrics, per-setting reports with deltas against a
//! clean baseline, clean-precision@k of the reranker, injection-ratio sweeps
//! and similarity-delta histograms.

mod histogram;
mod metrics;

use std::fmt::Write as _;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use histogram::{histogram, pair_generated_with_sources, similarity_delta_histogram, DeltaPair, Histogram};
pub use metrics::{clean_precision_at_k, compute_metrics, Confusion, Metrics};

use crate::corpus::{Claim, Corpus, EvidenceItem, Label, Modality, Split};
use crate::detector::{detect, ClaimEvidence, DetectorConfig, DetectorError, Strategy, Verdict};
use crate::embedding::{caption_key, evidence_key, image_key, EmbeddingCache, EmbeddingError};
use crate::pollution::{inject, PollutionConfig, PollutionError};
use crate::strategies::{rank_by_cosine, rank_records, RankRecord, StrategyError};
use crate::Exec;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels and predictions differ in length ({labels} vs {predictions})")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no claim has ranked evidence")]
    NoRankedEvidence,
    #[error("embedding coverage too low: {missing} of {required} embeddings missing (tolerance {tolerance})")]
    Coverage { missing: usize, required: usize, tolerance: f64 },
    #[error("invalid ratio grid: {0}")]
    Ratios(String),
    #[error("invalid histogram: {0}")]
    Histogram(String),
    #[error("no clean/generated pairs to compare")]
    EmptyPairing,
    #[error("unknown setting `{0}` (expected clean|polluted_text|polluted_image|polluted_both)")]
    UnknownSetting(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Pollution(#[from] PollutionError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which evidence modalities are polluted in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Clean,
    PollutedText,
    PollutedImage,
    PollutedBoth,
}

impl Setting {
    pub const ALL: [Setting; 4] =
        [Setting::Clean, Setting::PollutedText, Setting::PollutedImage, Setting::PollutedBoth];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Clean => "clean",
            Setting::PollutedText => "polluted_text",
            Setting::PollutedImage => "polluted_image",
            Setting::PollutedBoth => "polluted_both",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Setting::Clean => "Clean",
            Setting::PollutedText => "Polluted Text",
            Setting::PollutedImage => "Polluted Image",
            Setting::PollutedBoth => "Polluted Text + Image",
        }
    }

    /// Injection config for this setting, `None` for the clean setting.
    pub fn pollution(self, ratio: f64, seed: u64) -> Option<PollutionConfig> {
        let (text, image) = match self {
            Setting::Clean => return None,
            Setting::PollutedText => (true, false),
            Setting::PollutedImage => (false, true),
            Setting::PollutedBoth => (true, true),
        };
        Some(PollutionConfig::new(ratio, seed).with_modalities(text, image))
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Setting::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| EvalError::UnknownSetting(s.to_string()))
    }
}

/// Everything an evaluation run reads besides the detector config.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    /// The clean corpus.
    pub corpus: &'a Corpus,
    /// Generated evidence available for injection.
    pub pool: &'a [EvidenceItem],
    pub cache: &'a EmbeddingCache,
    pub ratio: f64,
    pub seed: u64,
    /// Restricts scoring to one split; `None` scores every claim.
    pub split: Option<Split>,
    /// Largest tolerated fraction of missing embeddings.
    pub coverage_tolerance: f64,
    pub exec: Exec,
}

impl<'a> EvalContext<'a> {
    pub fn new(corpus: &'a Corpus, pool: &'a [EvidenceItem], cache: &'a EmbeddingCache, seed: u64) -> Self {
        EvalContext {
            corpus,
            pool,
            cache,
            ratio: 1.0,
            seed,
            split: None,
            coverage_tolerance: 0.0,
            exec: Exec::default(),
        }
    }

    /// The corpus a setting is evaluated on.
    pub fn corpus_for(&self, setting: Setting) -> Result<Corpus, EvalError> {
        match setting.pollution(self.ratio, self.seed) {
            None => Ok(self.corpus.clone()),
            Some(cfg) => Ok(inject(self.corpus, self.pool, &cfg)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub strategy: Strategy,
    pub accuracy: f64,
    pub f1_true: f64,
    pub f1_false: f64,
    /// This report minus the linked baseline.
    pub delta_vs_clean: Option<Metrics>,
    pub evaluated_claims: usize,
}

impl EvalReport {
    pub fn metrics(&self) -> Metrics {
        Metrics { accuracy: self.accuracy, f1_true: self.f1_true, f1_false: self.f1_false }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub verdicts: Vec<Verdict>,
}

/// Scores of a single corpus.
#[derive(Debug, Clone)]
pub struct CorpusScore {
    pub metrics: Metrics,
    pub verdicts: Vec<Verdict>,
    /// Claims dropped for lack of a caption or image embedding.
    pub skipped_claims: usize,
}

fn in_split(corpus: &Corpus, split: Option<Split>) -> Vec<&Claim> {
    corpus.claims().iter().filter(|c| split.is_none_or(|s| c.split == s)).collect()
}

/// Returns `(missing, required)` embedding counts for `claims`.
pub fn coverage_gap(corpus: &Corpus, cache: &EmbeddingCache, claims: &[&Claim]) -> (usize, usize) {
    let mut missing = 0;
    let mut required = 0;
    for claim in claims {
        let keys = [caption_key(&claim.id), image_key(&claim.id)]
            .into_iter()
            .chain(corpus.evidence_for(&claim.id).map(|e| evidence_key(&e.id)));
        for key in keys {
            required += 1;
            if !cache.contains(&key) {
                missing += 1;
            }
        }
    }
    (missing, required)
}

pub fn evaluate_corpus(
    corpus: &Corpus,
    cache: &EmbeddingCache,
    detector: &DetectorConfig,
    split: Option<Split>,
    coverage_tolerance: f64,
    exec: Exec,
) -> Result<CorpusScore, EvalError> {
    detector.validate()?;
    let claims = in_split(corpus, split);
    let (missing, required) = coverage_gap(corpus, cache, &claims);
    if required > 0 && missing as f64 / required as f64 > coverage_tolerance {
        return Err(EvalError::Coverage { missing, required, tolerance: coverage_tolerance });
    }
    let results = exec.map(&claims, |claim| -> Result<Option<(Label, Verdict)>, DetectorError> {
        match ClaimEvidence::from_cache(corpus, cache, claim) {
            Ok((input, _)) => Ok(Some((claim.label, detect(&input, detector)?))),
            Err(DetectorError::MissingClaimEmbedding(..)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut labels = Vec::with_capacity(claims.len());
    let mut verdicts = Vec::with_capacity(claims.len());
    let mut skipped_claims = 0;
    for r in results {
        match r? {
            Some((label, verdict)) => {
                labels.push(label);
                verdicts.push(verdict);
            }
            None => skipped_claims += 1,
        }
    }
    let predictions: Vec<Label> = verdicts.iter().map(|v| v.predicted).collect();
    let metrics = compute_metrics(&labels, &predictions)?;
    Ok(CorpusScore { metrics, verdicts, skipped_claims })
}

/// Injects according to `setting`, runs the detector over every claim and
/// links the result to `baseline` when given.
pub fn run_evaluation(
    ctx: &EvalContext<'_>,
    detector: &DetectorConfig,
    setting: Setting,
    baseline: Option<&EvalReport>,
) -> Result<Evaluation, EvalError> {
    let corpus = ctx.corpus_for(setting)?;
    let score = evaluate_corpus(&corpus, ctx.cache, detector, ctx.split, ctx.coverage_tolerance, ctx.exec)?;
    if score.skipped_claims > 0 {
        log::warn!("{}: {} claims skipped for missing embeddings", setting, score.skipped_claims);
    }
    if let Some(b) = baseline {
        if b.strategy != detector.strategy {
            log::warn!("baseline strategy `{}` differs from `{}`", b.strategy, detector.strategy);
        }
    }
    let m = score.metrics;
    Ok(Evaluation {
        report: EvalReport {
            setting,
            strategy: detector.strategy,
            accuracy: m.accuracy,
            f1_true: m.f1_true,
            f1_false: m.f1_false,
            delta_vs_clean: baseline.map(|b| m.minus(&b.metrics())),
            evaluated_claims: score.verdicts.len(),
        },
        verdicts: score.verdicts,
    })
}

pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("setting,strategy,accuracy,f1_true,f1_false,d_acc,d_f1_true,d_f1_false\n");
    for r in reports {
        let _ = write!(out, "{},{},{:.6},{:.6},{:.6}", r.setting, r.strategy, r.accuracy, r.f1_true, r.f1_false);
        match r.delta_vs_clean {
            Some(d) => {
                let _ = writeln!(out, ",{:.6},{:.6},{:.6}", d.accuracy, d.f1_true, d.f1_false);
            }
            None => out.push_str(",,,\n"),
        }
    }
    out
}

/// A percentage cell, with the change against the baseline in parentheses:
/// `72.00 (↓12.00)`.
pub fn format_cell(value: f64, delta: Option<f64>) -> String {
    let base = format!("{:.2}", value * 100.0);
    match delta {
        None => base,
        Some(d) => {
            let pct = d * 100.0;
            if pct.abs() < 0.005 {
                format!("{base} (0.00)")
            } else if pct < 0.0 {
                format!("{base} (↓{:.2})", -pct)
            } else {
                format!("{base} (↑{pct:.2})")
            }
        }
    }
}

/// Human-readable table: one block per strategy, one row per setting.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| (r.strategy, r.setting));
    let mut out = format!("{:<24}{:<24}{:<18}{:<18}{}\n", "Strategy", "Setting", "Acc", "F1 True", "F1 False");
    let mut last = None;
    for r in sorted {
        let name = if last == Some(r.strategy) { "" } else { r.strategy.title() };
        last = Some(r.strategy);
        let d = r.delta_vs_clean;
        let _ = writeln!(
            out,
            "{:<24}{:<24}{:<18}{:<18}{}",
            name,
            r.setting.title(),
            format_cell(r.accuracy, d.map(|d| d.accuracy)),
            format_cell(r.f1_true, d.map(|d| d.f1_true)),
            format_cell(r.f1_false, d.map(|d| d.f1_false)),
        );
    }
    out
}

/// The k values reported for the reranker.
pub const RERANK_KS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankEvalRow {
    pub evidence_modality: Modality,
    pub query_modality: Modality,
    /// Clean-precision at each of [`RERANK_KS`].
    pub clean_precision: [f64; 4],
    pub claims: usize,
    /// Claims with no ranked evidence of this modality.
    pub skipped: usize,
}

/// Clean-precision@k of cross-modal reranking for one evidence modality.
/// Text evidence is queried with the claim image, image evidence with the
/// caption. Evidence without an embedding is left out of the ranking.
pub fn rerank_eval(
    corpus: &Corpus,
    cache: &EmbeddingCache,
    modality: Modality,
    split: Option<Split>,
    exec: Exec,
) -> Result<RerankEvalRow, EvalError> {
    let claims = in_split(corpus, split);
    let lists = exec.map(&claims, |claim| -> Result<Vec<bool>, StrategyError> {
        let query_key = match modality {
            Modality::Text => image_key(&claim.id),
            Modality::Image => caption_key(&claim.id),
        };
        let Some(query) = cache.get(&query_key) else {
            return Ok(Vec::new());
        };
        let items: Vec<&EvidenceItem> = corpus.evidence_by(&claim.id, modality).collect();
        let candidates: Vec<(&str, _)> =
            items.iter().filter_map(|e| cache.get(&evidence_key(&e.id)).map(|v| (e.id.as_str(), v))).collect();
        let ranked = rank_by_cosine(query, &candidates)?;
        Ok(ranked.ids().into_iter().map(|id| items.iter().any(|e| e.id == id && e.is_clean())).collect())
    });
    let lists = lists.into_iter().collect::<Result<Vec<_>, _>>()?;
    let skipped = lists.iter().filter(|l| l.is_empty()).count();
    let mut clean_precision = [0.0; 4];
    for (slot, k) in clean_precision.iter_mut().zip(RERANK_KS) {
        *slot = clean_precision_at_k(&lists, k)?;
    }
    Ok(RerankEvalRow {
        evidence_modality: modality,
        query_modality: match modality {
            Modality::Text => Modality::Image,
            Modality::Image => Modality::Text,
        },
        clean_precision,
        claims: lists.len() - skipped,
        skipped,
    })
}

pub fn rerank_rows_to_csv(rows: &[RerankEvalRow]) -> String {
    let mut out = String::from("evidence_modality,query_modality,cp@1,cp@3,cp@5,cp@10\n");
    for r in rows {
        let cp = r.clean_precision;
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            r.evidence_modality, r.query_modality, cp[0], cp[1], cp[2], cp[3]
        );
    }
    out
}

/// Full cosine rankings of both modalities for every claim, for auditing.
pub fn ranking_records(corpus: &Corpus, cache: &EmbeddingCache, exec: Exec) -> Result<Vec<RankRecord>, EvalError> {
    let claims: Vec<&Claim> = corpus.claims().iter().collect();
    let per_claim = exec.map(&claims, |claim| -> Result<Vec<RankRecord>, StrategyError> {
        let mut out = Vec::new();
        for (modality, query_key) in [(Modality::Text, image_key(&claim.id)), (Modality::Image, caption_key(&claim.id))]
        {
            let Some(query) = cache.get(&query_key) else { continue };
            let candidates: Vec<(&str, _)> = corpus
                .evidence_by(&claim.id, modality)
                .filter_map(|e| cache.get(&evidence_key(&e.id)).map(|v| (e.id.as_str(), v)))
                .collect();
            out.extend(rank_records(&claim.id, modality, &rank_by_cosine(query, &candidates)?));
        }
        Ok(out)
    });
    let mut records = Vec::new();
    for r in per_claim {
        records.extend(r?);
    }
    Ok(records)
}

pub const DEFAULT_SWEEP_RATIOS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ratio: f64,
    pub metrics: Metrics,
}

/// One injection and evaluation per ratio, all under the context's seed.
pub fn ratio_sweep(
    ctx: &EvalContext<'_>,
    detector: &DetectorConfig,
    setting: Setting,
    ratios: &[f64],
) -> Result<Vec<SweepPoint>, EvalError> {
    if setting == Setting::Clean {
        return Err(EvalError::Ratios("a sweep needs a polluted setting".into()));
    }
    if ratios.is_empty() {
        return Err(EvalError::Ratios("empty".into()));
    }
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(EvalError::Ratios(format!("{r} outside [0, 1]")));
    }
    if ratios.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::Ratios("ratios must be sorted".into()));
    }
    ratios
        .iter()
        .map(|&ratio| {
            let ctx = EvalContext { ratio, ..*ctx };
            let report = run_evaluation(&ctx, detector, setting, None)?.report;
            Ok(SweepPoint { ratio, metrics: report.metrics() })
        })
        .collect()
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("ratio,accuracy,f1_true,f1_false\n");
    for p in points {
        let m = p.metrics;
        let _ = writeln!(out, "{:.4},{:.6},{:.6},{:.6}", p.ratio, m.accuracy, m.f1_true, m.f1_false);
    }
    out
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), EvalError> {
    let io = |source| EvalError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}
