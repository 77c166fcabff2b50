//! Run configuration: a TOML file flattened to dotted keys, overlaid with
//! command-line overrides. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mmguard::corpus::{Modality, Split};
use mmguard::detector::{ComponentWeights, DetectorConfig, Strategy};
use mmguard::eval::{Setting, DEFAULT_SWEEP_RATIOS};
use mmguard::pollution::{GeneratorKind, KindWeights, PollutionConfig};
use mmguard::Exec;
use thiserror::Error;
use toml::Value;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: expected {expected}")]
    Type { key: String, expected: &'static str },
    #[error("missing required config key `{0}`")]
    Missing(&'static str),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub type Flat = BTreeMap<String, Value>;

/// Reads a TOML file into dotted keys. Relative `paths.*` values are taken
/// relative to the file's directory.
pub fn read_file(path: &Path) -> Result<Flat, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.message().to_string() })?;
    let mut flat = Flat::new();
    flatten("", table, &mut flat);
    let base = path.parent().unwrap_or(Path::new(""));
    for (key, value) in flat.iter_mut() {
        if let (true, Value::String(s)) = (key.starts_with("paths."), &*value) {
            *value = Value::String(base.join(s).to_string_lossy().into_owned());
        }
    }
    Ok(flat)
}

fn flatten(prefix: &str, table: toml::Table, out: &mut Flat) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

/// Parses a `key=value` override; the value is read as a TOML value, or as
/// a bare string when that fails.
pub fn parse_override(s: &str) -> Result<(String, Value), String> {
    let (key, raw) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub run_dir: PathBuf,
    pub images: Option<PathBuf>,
    pub strict: bool,
    pub backend: BackendKind,
    pub endpoint: String,
    pub mock_dim: usize,
    pub timeout_secs: u64,
    pub batch_size: usize,
    pub min_coverage: f64,
    pub pollution: PollutionConfig,
    pub detector: DetectorConfig,
    pub strategies: Vec<Strategy>,
    pub settings: Vec<Setting>,
    pub split: Option<Split>,
    pub coverage_tolerance: f64,
    pub ratios: Vec<f64>,
    pub sweep: bool,
    pub baseline: bool,
    pub calibrate: bool,
    pub hist_bins: usize,
    pub hist_lo: f64,
    pub hist_hi: f64,
    pub hist_modality: Modality,
    pub jobs: Option<usize>,
}

struct Keys(Flat);

impl Keys {
    fn take(&mut self, key: &str) -> Option<(String, Value)> {
        self.0.remove_entry(key)
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((_, Value::String(s))) => Ok(Some(s)),
            Some((k, _)) => Err(ConfigError::Type { key: k, expected: "a string" }),
        }
    }

    fn path(&mut self, key: &str) -> Result<Option<PathBuf>, ConfigError> {
        Ok(self.string(key)?.map(PathBuf::from))
    }

    fn float(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((_, Value::Float(x))) => Ok(x),
            Some((_, Value::Integer(i))) => Ok(i as f64),
            Some((k, _)) => Err(ConfigError::Type { key: k, expected: "a number" }),
        }
    }

    fn uint(&mut self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((k, Value::Integer(i))) => {
                u64::try_from(i).map(Some).map_err(|_| ConfigError::Type { key: k, expected: "a non-negative integer" })
            }
            Some((k, _)) => Err(ConfigError::Type { key: k, expected: "a non-negative integer" }),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.uint(key)?.map_or(default, |v| v as usize))
    }

    fn boolean(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((_, Value::Boolean(b))) => Ok(b),
            Some((k, _)) => Err(ConfigError::Type { key: k, expected: "a boolean" }),
        }
    }

    fn strings(&mut self, key: &str) -> Result<Option<Vec<String>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((_, Value::String(s))) => Ok(Some(s.split(',').map(|p| p.trim().to_string()).collect())),
            Some((k, Value::Array(items))) => items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s),
                    _ => Err(ConfigError::Type { key: k.clone(), expected: "an array of strings" }),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some((k, _)) => Err(ConfigError::Type { key: k, expected: "an array of strings" }),
        }
    }

    fn floats(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((k, Value::Array(items))) => items
                .into_iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(x),
                    Value::Integer(i) => Ok(i as f64),
                    _ => Err(ConfigError::Type { key: k.clone(), expected: "an array of numbers" }),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some((k, _)) => Err(ConfigError::Type { key: k, expected: "an array of numbers" }),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Accepts full setting names plus the short forms `text`, `image`, `both`
/// and `all`.
pub fn parse_settings(names: &[String]) -> Result<Vec<Setting>, ConfigError> {
    let mut out = Vec::new();
    for name in names {
        let expanded = match name.as_str() {
            "all" => Setting::ALL.to_vec(),
            "text" => vec![Setting::PollutedText],
            "image" => vec![Setting::PollutedImage],
            "both" => vec![Setting::PollutedBoth],
            other => match other.parse::<Setting>() {
                Ok(s) => vec![s],
                Err(_) => {
                    return Err(invalid(format!("unknown setting `{other}` (expected clean|text|image|both|all)")))
                }
            },
        };
        for s in expanded {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out.sort();
    Ok(out)
}

impl RunConfig {
    pub fn from_flat(flat: Flat) -> Result<Self, ConfigError> {
        let mut k = Keys(flat);
        let seed = k.uint("seed")?.ok_or(ConfigError::Missing("seed"))?;

        let backend = match k.string("backend.kind")?.as_deref() {
            None | Some("mock") => BackendKind::Mock,
            Some("http") => BackendKind::Http,
            Some(other) => return Err(invalid(format!("backend.kind `{other}` (expected mock|http)"))),
        };
        let generator = match k.string("pollution.generator")?.as_deref() {
            None | Some("mock") => GeneratorKind::Mock,
            Some("remote") => GeneratorKind::Remote,
            Some(other) => return Err(invalid(format!("pollution.generator `{other}` (expected mock|remote)"))),
        };
        let pollution = PollutionConfig {
            ratio: k.float("pollution.ratio", 1.0)?,
            text: k.boolean("pollution.text", true)?,
            image: k.boolean("pollution.image", true)?,
            text_kinds: KindWeights {
                entity: k.float("pollution.kinds.entity", 1.0)?,
                support: k.float("pollution.kinds.support", 1.0)?,
                refute: k.float("pollution.kinds.refute", 1.0)?,
            },
            seed,
            generator,
        };
        pollution.validate().map_err(|e| invalid(e.to_string()))?;

        let strategies = match k.strings("eval.strategies")? {
            None => Strategy::ALL.to_vec(),
            Some(names) => {
                let mut out = names
                    .iter()
                    .map(|n| n.parse::<Strategy>().map_err(|e| invalid(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                out.sort();
                out.dedup();
                out
            }
        };
        let detector = DetectorConfig {
            weights: ComponentWeights {
                consistency: k.float("detector.weights.consistency", 1.0)?,
                textual: k.float("detector.weights.textual", 1.0)?,
                visual: k.float("detector.weights.visual", 1.0)?,
                reasoning: k.float("detector.weights.reasoning", 1.0)?,
            },
            threshold: k.float("detector.threshold", 0.5)?,
            k_text: k.usize_or("detector.k_text", mmguard::strategies::DEFAULT_K_TEXT)?,
            k_image: k.usize_or("detector.k_image", mmguard::strategies::DEFAULT_K_IMAGE)?,
            strategy: strategies.first().copied().unwrap_or_default(),
        };
        detector.validate().map_err(|e| invalid(e.to_string()))?;

        let settings = match k.strings("eval.settings")? {
            None => Setting::ALL.to_vec(),
            Some(names) => parse_settings(&names)?,
        };
        let split = match k.string("eval.split")?.as_deref() {
            None | Some("all") => None,
            Some(name) => Some(
                Split::ALL
                    .into_iter()
                    .find(|s| s.as_str() == name)
                    .ok_or_else(|| invalid(format!("eval.split `{name}` (expected all|train|validation|test)")))?,
            ),
        };
        let hist_modality = match k.string("histogram.modality")?.as_deref() {
            None | Some("image") => Modality::Image,
            Some("text") => Modality::Text,
            Some(other) => return Err(invalid(format!("histogram.modality `{other}` (expected text|image)"))),
        };

        let cfg = RunConfig {
            seed,
            corpus: k.path("paths.corpus")?,
            pool: k.path("paths.pool")?,
            cache: k.path("paths.cache")?,
            run_dir: k.path("paths.run_dir")?.unwrap_or_else(|| PathBuf::from("run")),
            images: k.path("paths.images")?,
            strict: k.boolean("corpus.strict", true)?,
            backend,
            endpoint: k.string("backend.endpoint")?.unwrap_or_else(|| "http://127.0.0.1:8000".into()),
            mock_dim: k.usize_or("backend.dim", 64)?,
            timeout_secs: k.uint("backend.timeout_secs")?.unwrap_or(60),
            batch_size: k.usize_or("embed.batch_size", 32)?,
            min_coverage: k.float("embed.min_coverage", 1.0)?,
            pollution,
            detector,
            strategies,
            settings,
            split,
            coverage_tolerance: k.float("eval.coverage_tolerance", 0.0)?,
            ratios: k.floats("eval.ratios")?.unwrap_or_else(|| DEFAULT_SWEEP_RATIOS.to_vec()),
            sweep: k.boolean("eval.sweep", false)?,
            baseline: k.boolean("eval.baseline", false)?,
            calibrate: k.boolean("eval.calibrate", false)?,
            hist_bins: k.usize_or("histogram.bins", 20)?,
            hist_lo: k.float("histogram.lo", -1.0)?,
            hist_hi: k.float("histogram.hi", 1.0)?,
            hist_modality,
            jobs: k.uint("jobs")?.map(|j| j as usize),
        };
        if let Some(key) = k.0.into_keys().next() {
            return Err(ConfigError::UnknownKey(key));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.mock_dim == 0 {
            return Err(invalid("backend.dim must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("embed.batch_size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(invalid("embed.min_coverage must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.coverage_tolerance) {
            return Err(invalid("eval.coverage_tolerance must lie in [0, 1]"));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(invalid("eval.ratios must be non-empty and within [0, 1]"));
        }
        if self.ratios.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("eval.ratios must be sorted"));
        }
        if self.strategies.is_empty() || self.settings.is_empty() {
            return Err(invalid("eval.strategies and eval.settings must not be empty"));
        }
        if self.hist_bins == 0 || self.hist_lo.partial_cmp(&self.hist_hi) != Some(std::cmp::Ordering::Less) {
            return Err(invalid("histogram needs bins >= 1 and lo < hi"));
        }
        self.detector.validate().map_err(|e| ConfigError::Invalid(format!("detector: {e}")))?;
        if self.jobs == Some(0) {
            return Err(invalid("jobs must be at least 1"));
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        match self.jobs {
            Some(1) => Exec::SEQUENTIAL,
            jobs => Exec::parallel(jobs),
        }
    }

    pub fn corpus_dir(&self) -> Result<&Path, ConfigError> {
        self.corpus.as_deref().ok_or(ConfigError::Missing("paths.corpus"))
    }

    pub fn pool_path(&self) -> PathBuf {
        self.pool.clone().unwrap_or_else(|| self.run_dir.join(crate::run_dir::POOL_FILE))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.run_dir.join(crate::run_dir::CACHE_FILE))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(pairs: &[&str]) -> Flat {
        pairs.iter().map(|p| parse_override(p).unwrap()).collect()
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(RunConfig::from_flat(Flat::new()), Err(ConfigError::Missing("seed"))));
        assert_eq!(RunConfig::from_flat(flat(&["seed=42"])).unwrap().seed, 42);
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        assert!(matches!(
            RunConfig::from_flat(flat(&["seed=1", "detector.colour=3"])),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(RunConfig::from_flat(flat(&["seed=1", "pollution.ratio=1.5"])), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::from_flat(flat(&["seed=1", "detector.k_text=0"])), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            RunConfig::from_flat(flat(&["seed=1", "pollution.ratio=\"x\""])),
            Err(ConfigError::Type { .. })
        ));
    }

    #[test]
    fn flattens_nested_tables() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 3\n[detector]\nthreshold = 0.7\nweights.visual = 2\n[paths]\ncorpus = \"data\"\n",
        )
        .unwrap();
        let cfg = RunConfig::from_flat(read_file(&path).unwrap()).unwrap();
        assert_eq!(cfg.detector.threshold, 0.7);
        assert_eq!(cfg.detector.weights.visual, 2.0);
        assert_eq!(cfg.corpus.unwrap(), dir.path().join("data"));
    }

    #[test]
    fn setting_aliases() {
        let s = parse_settings(&["both".into(), "clean".into(), "both".into()]).unwrap();
        assert_eq!(s, [Setting::Clean, Setting::PollutedBoth]);
        assert_eq!(parse_settings(&["all".into()]).unwrap(), Setting::ALL);
        assert!(parse_settings(&["dirty".into()]).is_err());
    }

    #[test]
    fn override_values() {
        assert_eq!(parse_override("a.b=0.5").unwrap(), ("a.b".into(), Value::Float(0.5)));
        assert_eq!(parse_override("a=hello").unwrap(), ("a".into(), Value::String("hello".into())));
        assert!(parse_override("novalue").is_err());
    }
}
