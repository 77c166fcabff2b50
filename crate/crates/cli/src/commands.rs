use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use log::warn;
use mmguard::corpus::{
    corpus_stats, load_corpus_dir, read_evidence_manifest, save_corpus, write_evidence_manifest, Corpus, EvidenceItem,
    LoadOptions, Modality, Split,
};
use mmguard::detector::calibrate_threshold;
use mmguard::embedding::{batch_embed, BatchOptions, EmbeddingBackend, EmbeddingCache, HttpBackend, MockBackend};
use mmguard::eval::{
    pair_generated_with_sources, ratio_sweep, render_table, reports_to_csv, rerank_eval, rerank_rows_to_csv,
    run_evaluation, similarity_delta_histogram, sweep_to_csv, write_jsonl, EvalContext, EvalError, Setting,
};
use mmguard::fixture::{AdversarialFixture, FixtureParams};
use mmguard::images::ImageResolver;
use mmguard::pollution::{
    generate_pool, inject, write_generation_log, GeneratorKind, ImageGenerator, MockImageGenerator, MockTextGenerator,
    PollutionConfig, RemoteImageGenerator, RemoteTextGenerator, TextGenerator,
};
use mmguard::sidecar::{DecodingParams, SidecarClient, ENDPOINT_ENV};

use crate::config::{BackendKind, RunConfig};
use crate::run_dir::{self, RunDir};

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let dir = cfg.corpus_dir()?;
    if !dir.exists() {
        bail!("corpus path {} does not exist", dir.display());
    }
    load_corpus_dir(dir, LoadOptions { strict: cfg.strict })
        .with_context(|| format!("loading corpus {}", dir.display()))
}

fn load_pool(cfg: &RunConfig, required: bool) -> Result<Vec<EvidenceItem>> {
    let path = cfg.pool_path();
    if !path.exists() {
        if required {
            bail!("generated pool {} does not exist (run `mmguard pollute` first)", path.display());
        }
        return Ok(Vec::new());
    }
    read_evidence_manifest(&path, LoadOptions { strict: cfg.strict })
        .with_context(|| format!("loading generated pool {}", path.display()))
}

fn load_cache(cfg: &RunConfig) -> Result<EmbeddingCache> {
    let path = cfg.cache_path();
    if !path.exists() {
        bail!("embedding cache {} does not exist (run `mmguard embed` first)", path.display());
    }
    EmbeddingCache::read_from(&path).with_context(|| format!("loading embedding cache {}", path.display()))
}

/// Corpus plus every pool item.
fn with_pool(corpus: &Corpus, pool: &[EvidenceItem], seed: u64) -> Result<Corpus> {
    if pool.is_empty() {
        return Ok(corpus.clone());
    }
    Ok(inject(corpus, pool, &PollutionConfig::new(1.0, seed))?)
}

fn client(cfg: &RunConfig) -> SidecarClient {
    let url = std::env::var(ENDPOINT_ENV).ok().filter(|u| !u.is_empty()).unwrap_or_else(|| cfg.endpoint.clone());
    SidecarClient::with_timeout(url, Duration::from_secs(cfg.timeout_secs))
}

fn resolver(cfg: &RunConfig) -> ImageResolver {
    match &cfg.images {
        Some(root) => ImageResolver::new(root),
        None => ImageResolver::unchecked(),
    }
}

pub fn stats(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let pool = load_pool(cfg, false)?;
    let table = corpus_stats(&with_pool(&corpus, &pool, cfg.seed)?);
    print!("{table}");
    let mut run = RunDir::create(&cfg.run_dir)?;
    run.write(run_dir::STATS_CSV, &table.to_csv())?;
    run.finish("stats")
}

pub fn pollute(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let exec = cfg.exec();
    let (text_gen, image_gen): (Box<dyn TextGenerator>, Box<dyn ImageGenerator>) = match cfg.pollution.generator {
        GeneratorKind::Mock => (Box::new(MockTextGenerator), Box::new(MockImageGenerator::new(resolver(cfg)))),
        GeneratorKind::Remote => {
            let Some(root) = &cfg.images else {
                bail!("pollution.generator = remote needs paths.images for generated image files");
            };
            (
                Box::new(RemoteTextGenerator::new(client(cfg), DecodingParams::default())),
                Box::new(RemoteImageGenerator::new(client(cfg), root, "generated")),
            )
        }
    };
    let generated = generate_pool(&corpus, &cfg.pollution, text_gen.as_ref(), image_gen.as_ref(), exec)?;
    for (id, reason) in &generated.failures {
        warn!("generation failed for {id}: {reason}");
    }

    let mut run = RunDir::create(&cfg.run_dir)?;
    let pool_path = cfg.pool_path();
    write_evidence_manifest(&pool_path, &generated.items)?;
    run.record(pool_path);
    let log_path = run.path(run_dir::GENERATION_LOG);
    write_generation_log(&log_path, &generated.records)?;
    run.record(log_path);

    let polluted = inject(&corpus, &generated.items, &cfg.pollution)?;
    let (claims, evidence) = save_corpus(&polluted, &run.subdir(run_dir::POLLUTED_DIR)?)?;
    run.record(claims);
    run.record(evidence);
    let table = corpus_stats(&polluted);
    print!("{table}");
    run.write(run_dir::STATS_CSV, &table.to_csv())?;
    println!(
        "generated {} items ({} failed); injected at ratio {}",
        generated.items.len(),
        generated.failures.len(),
        cfg.pollution.ratio
    );
    run.finish("pollute")
}

pub fn embed(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let pool = load_pool(cfg, false)?;
    let full = with_pool(&corpus, &pool, cfg.seed)?;
    let backend: Arc<dyn EmbeddingBackend> = match cfg.backend {
        BackendKind::Mock => match &cfg.images {
            Some(root) => Arc::new(MockBackend::with_resolver(cfg.mock_dim, ImageResolver::new(root))),
            None => Arc::new(MockBackend::new(cfg.mock_dim)),
        },
        BackendKind::Http => Arc::new(HttpBackend::new(client(cfg), resolver(cfg))),
    };
    let cache_path = cfg.cache_path();
    if let Some(parent) = cache_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let opts = BatchOptions { text_batch: cfg.batch_size, exec: cfg.exec() };
    let (_, report) = batch_embed(&full, backend.as_ref(), &cache_path, opts)
        .with_context(|| format!("embedding with the {} backend", backend.name()))?;

    let mut run = RunDir::create(&cfg.run_dir)?;
    run.record(cache_path);
    let failures: Vec<serde_json::Value> =
        report.failed.iter().map(|(key, reason)| serde_json::json!({ "key": key, "reason": reason })).collect();
    let failures_path = run.path(run_dir::EMBED_FAILURES);
    write_jsonl(&failures_path, &failures)?;
    run.record(failures_path);
    run.finish("embed")?;

    let coverage = report.coverage();
    println!(
        "{} new embeddings, {} reused, {} failed (coverage {:.2}%)",
        report.embedded,
        report.reused,
        report.failed.len(),
        coverage * 100.0
    );
    if coverage < cfg.min_coverage {
        bail!("embedding coverage {:.4} below threshold {:.4}", coverage, cfg.min_coverage);
    }
    Ok(())
}

fn split_subset(corpus: &Corpus, split: Split) -> Result<Corpus> {
    let claims: Vec<_> = corpus.claims().iter().filter(|c| c.split == split).cloned().collect();
    let evidence: Vec<_> = claims.iter().flat_map(|c| corpus.evidence_for(&c.id).cloned()).collect();
    Ok(Corpus::new(claims, evidence)?)
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let needs_pool = cfg.sweep || cfg.settings.iter().any(|s| *s != Setting::Clean);
    let pool = load_pool(cfg, needs_pool)?;
    let cache = load_cache(cfg)?;
    let ctx = EvalContext {
        corpus: &corpus,
        pool: &pool,
        cache: &cache,
        ratio: cfg.pollution.ratio,
        seed: cfg.seed,
        split: cfg.split,
        coverage_tolerance: cfg.coverage_tolerance,
        exec: cfg.exec(),
    };
    let validation = if cfg.calibrate { Some(split_subset(&corpus, Split::Validation)?) } else { None };

    let mut run = RunDir::create(&cfg.run_dir)?;
    let mut reports = Vec::new();
    for &strategy in &cfg.strategies {
        let mut detector = cfg.detector.with_strategy(strategy);
        if let Some(val) = &validation {
            detector.threshold = calibrate_threshold(&detector, val, &cache)
                .with_context(|| format!("calibrating the threshold for `{strategy}`"))?;
            println!("{strategy}: calibrated threshold {:.2}", detector.threshold);
        }
        let baseline = match cfg.baseline {
            true => Some(run_evaluation(&ctx, &detector, Setting::Clean, None)?.report),
            false => None,
        };
        for &setting in &cfg.settings {
            let evaluation = run_evaluation(&ctx, &detector, setting, baseline.as_ref())?;
            let path = run.subdir("verdicts")?.join(format!("{strategy}_{setting}.jsonl"));
            write_jsonl(&path, &evaluation.verdicts)?;
            run.record(path);
            reports.push(evaluation.report);
        }
        if cfg.sweep {
            let mut polluted: Vec<Setting> = cfg.settings.iter().copied().filter(|s| *s != Setting::Clean).collect();
            if polluted.is_empty() {
                polluted.push(Setting::PollutedBoth);
            }
            for setting in polluted {
                let points = ratio_sweep(&ctx, &detector, setting, &cfg.ratios)?;
                run.write(&format!("sweep_{strategy}_{setting}.csv"), &sweep_to_csv(&points))?;
            }
        }
    }
    let table = render_table(&reports);
    print!("{table}");
    run.write(run_dir::REPORT_CSV, &reports_to_csv(&reports))?;
    run.write(run_dir::REPORT_TXT, &table)?;

    let ranked_corpus = if pool.is_empty() { corpus.clone() } else { ctx.corpus_for(Setting::PollutedBoth)? };
    let mut rows = Vec::new();
    for modality in [Modality::Text, Modality::Image] {
        match rerank_eval(&ranked_corpus, &cache, modality, cfg.split, cfg.exec()) {
            Ok(row) => rows.push(row),
            Err(EvalError::NoRankedEvidence) => warn!("no ranked {modality} evidence; skipping its rerank row"),
            Err(e) => return Err(e.into()),
        }
    }
    run.write(run_dir::RERANK_CSV, &rerank_rows_to_csv(&rows))?;
    run.finish("eval")
}

pub fn histogram(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let pool = load_pool(cfg, true)?;
    let cache = load_cache(cfg)?;
    let (pairs, skipped) = pair_generated_with_sources(&corpus, &pool, &cache, cfg.hist_modality);
    let hist = similarity_delta_histogram(&pairs, cfg.hist_bins, cfg.hist_lo, cfg.hist_hi)?;
    let mut run = RunDir::create(&cfg.run_dir)?;
    run.write(run_dir::HISTOGRAM_CSV, &hist.to_csv())?;
    println!(
        "{} {} pairs binned, {} out of range, {} unpaired",
        pairs.len() - hist.out_of_range,
        cfg.hist_modality,
        hist.out_of_range,
        skipped
    );
    run.finish("histogram")
}

/// Writes the synthetic adversarial fixture plus a config pointing at it.
pub fn synth(out: &Path, params: FixtureParams) -> Result<()> {
    let fx = AdversarialFixture::build(params)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    save_corpus(&fx.corpus, out)?;
    write_evidence_manifest(&out.join(run_dir::POOL_FILE), &fx.pool)?;
    fx.cache.write_to(&out.join(run_dir::CACHE_FILE))?;
    let detector = AdversarialFixture::detector(Default::default());
    let config = format!(
        "seed = {}\n\n[paths]\ncorpus = \".\"\npool = \"{}\"\ncache = \"{}\"\nrun_dir = \"run\"\n\n\
         [detector]\nthreshold = {:?}\nk_text = {}\nk_image = {}\n",
        params.seed,
        run_dir::POOL_FILE,
        run_dir::CACHE_FILE,
        detector.threshold,
        detector.k_text,
        detector.k_image,
    );
    std::fs::write(out.join("mmguard.toml"), config)
        .with_context(|| format!("cannot write config in {}", out.display()))?;
    println!(
        "wrote {} claims, {} clean and {} generated evidence items to {}",
        fx.corpus.claims().len(),
        fx.corpus.evidence().len(),
        fx.pool.len(),
        out.display()
    );
    Ok(())
}
