mod commands;
mod config;
mod run_dir;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use mmguard::detector::Strategy;
use mmguard::fixture::FixtureParams;
use toml::Value;

use crate::config::{ConfigError, Flat, RunConfig};

/// Evidence pollution experiments for out-of-context misinformation detection.
#[derive(Parser)]
#[command(name = "mmguard", version)]
struct Cli {
    /// TOML config; nested tables and dotted keys are equivalent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set detector.threshold=0.6`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = config::parse_override)]
    set: Vec<(String, Value)>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file and the run manifest.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Worker threads for parallel stages (1 runs sequentially).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Inputs {
    /// Directory with claims.jsonl and evidence.jsonl.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Generated evidence manifest.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Embedding cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate polluted evidence and write the polluted corpus.
    Pollute {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        ratio: Option<f64>,
        /// mock | remote
        #[arg(long)]
        generator: Option<String>,
        /// Polluted modalities: text | image | both.
        #[arg(long)]
        modalities: Option<String>,
    },
    /// Embed claims, evidence and the generated pool into the cache.
    Embed {
        #[command(flatten)]
        inputs: Inputs,
        /// mock | http
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        min_coverage: Option<f64>,
    },
    /// Run the detector under each strategy and setting and write reports.
    Eval {
        #[command(flatten)]
        inputs: Inputs,
        /// none | rerank | reason | both; repeat or separate with commas.
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
        strategy: Vec<Strategy>,
        /// clean | text | image | both | all; repeat or separate with commas.
        #[arg(long, value_delimiter = ',')]
        setting: Vec<String>,
        /// Also sweep the injection ratio.
        #[arg(long)]
        sweep: bool,
        /// Report changes against the clean setting.
        #[arg(long)]
        baseline: bool,
        /// Calibrate the threshold on the validation split.
        #[arg(long)]
        calibrate: bool,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Print claim and evidence counts per split.
    Stats {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Histogram of similarity changes between generated and source evidence.
    Histogram {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        lo: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        hi: Option<f64>,
        /// text | image
        #[arg(long)]
        modality: Option<String>,
    },
    /// Write the synthetic adversarial fixture and a config for it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        claims: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: mmguard::detector::DetectorError| e.to_string())
}

fn put(flat: &mut Flat, key: &str, value: impl Into<Value>) {
    flat.insert(key.to_string(), value.into());
}

fn int(v: u64) -> Result<Value, ConfigError> {
    i64::try_from(v)
        .map(Value::Integer)
        .map_err(|_| ConfigError::Invalid(format!("{v} does not fit in a signed 64-bit integer")))
}

fn path_value(p: &std::path::Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

impl Inputs {
    fn apply(&self, flat: &mut Flat) {
        for (key, path) in [("paths.corpus", &self.corpus), ("paths.pool", &self.pool), ("paths.cache", &self.cache)] {
            if let Some(p) = path {
                flat.insert(key.into(), path_value(p));
            }
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut flat = match &cli.config {
        Some(path) => config::read_file(path)?,
        None => Flat::new(),
    };
    flat.extend(cli.set.iter().cloned());
    if let Some(seed) = cli.seed {
        flat.insert("seed".into(), int(seed)?);
    }
    if let Some(dir) = &cli.run_dir {
        flat.insert("paths.run_dir".into(), path_value(dir));
    }
    if let Some(jobs) = cli.jobs {
        flat.insert("jobs".into(), int(jobs as u64)?);
    }
    match &cli.command {
        Command::Pollute { inputs, ratio, generator, modalities } => {
            inputs.apply(&mut flat);
            if let Some(r) = ratio {
                put(&mut flat, "pollution.ratio", *r);
            }
            if let Some(g) = generator {
                put(&mut flat, "pollution.generator", g.as_str());
            }
            if let Some(m) = modalities {
                let (text, image) = match m.as_str() {
                    "text" => (true, false),
                    "image" => (false, true),
                    "both" => (true, true),
                    other => Err(ConfigError::Invalid(format!("--modalities `{other}` (expected text|image|both)")))?,
                };
                put(&mut flat, "pollution.text", text);
                put(&mut flat, "pollution.image", image);
            }
        }
        Command::Embed { inputs, backend, endpoint, min_coverage } => {
            inputs.apply(&mut flat);
            if let Some(b) = backend {
                put(&mut flat, "backend.kind", b.as_str());
            }
            if let Some(e) = endpoint {
                put(&mut flat, "backend.endpoint", e.as_str());
            }
            if let Some(c) = min_coverage {
                put(&mut flat, "embed.min_coverage", *c);
            }
        }
        Command::Eval { inputs, strategy, setting, sweep, baseline, calibrate, ratio, threshold } => {
            inputs.apply(&mut flat);
            if !strategy.is_empty() {
                let names = strategy.iter().map(|s| Value::String(s.as_str().into())).collect::<Vec<_>>();
                put(&mut flat, "eval.strategies", names);
            }
            if !setting.is_empty() {
                let names = setting.iter().map(|s| Value::String(s.clone())).collect::<Vec<_>>();
                put(&mut flat, "eval.settings", names);
            }
            for (key, on) in [("eval.sweep", sweep), ("eval.baseline", baseline), ("eval.calibrate", calibrate)] {
                if *on {
                    put(&mut flat, key, true);
                }
            }
            if let Some(r) = ratio {
                put(&mut flat, "pollution.ratio", *r);
            }
            if let Some(t) = threshold {
                put(&mut flat, "detector.threshold", *t);
            }
        }
        Command::Stats { inputs } => inputs.apply(&mut flat),
        Command::Histogram { inputs, bins, lo, hi, modality } => {
            inputs.apply(&mut flat);
            if let Some(b) = bins {
                flat.insert("histogram.bins".into(), int(*b as u64)?);
            }
            if let Some(x) = lo {
                put(&mut flat, "histogram.lo", *x);
            }
            if let Some(x) = hi {
                put(&mut flat, "histogram.hi", *x);
            }
            if let Some(m) = modality {
                put(&mut flat, "histogram.modality", m.as_str());
            }
        }
        Command::Synth { .. } => {}
    }
    Ok(RunConfig::from_flat(flat)?)
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Synth { out, claims, dim } = &cli.command {
        let seed = cli.seed.ok_or(ConfigError::Missing("seed"))?;
        return commands::synth(out, FixtureParams { claims: *claims, dim: *dim, seed });
    }
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::Pollute { .. } => commands::pollute(&cfg),
        Command::Embed { .. } => commands::embed(&cfg),
        Command::Eval { .. } => commands::eval(&cfg),
        Command::Stats { .. } => commands::stats(&cfg),
        Command::Histogram { .. } => commands::histogram(&cfg),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
