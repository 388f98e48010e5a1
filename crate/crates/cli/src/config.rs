//! Sectioned `key = value` settings files.
//!
//! The format is deliberately tiny: `[section]` headers, one `key = value`
//! pair per line, `#` comments on their own lines, blank lines ignored.
//! Later lines override earlier ones. Unknown sections or keys are errors,
//! as are values the owning module would reject; every input path named by
//! the file must exist when it is loaded. Command-line flags override
//! anything set here.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use augur_core::convlstm::Geometry;
use augur_core::pipeline::ModelOptions;
use augur_core::sentiment::Granularity;
use augur_core::synth::SynthConfig;
use augur_core::timeseries::FeatureColumn;
use augur_core::SearchConfig;

/// Every knob a subcommand can pick up from the settings file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub stock_csv: Option<PathBuf>,
    pub news_json: Option<PathBuf>,
    pub sources_tsv: Option<PathBuf>,
    pub lexicon_tsv: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub model: ModelOptions,
    pub search: SearchConfig,
    /// Training epochs per probe inside the window-length search.
    pub probe_epochs: usize,
    pub granularity: Granularity,
    /// Weight for news sources missing from the registry.
    pub default_weight: f64,
    /// Days sentiment is shifted forward before joining onto predictions.
    pub news_lag_days: i64,
    pub synth: SynthConfig,
    /// Train/test split fraction for find-seqlen and e2e.
    pub train_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            stock_csv: None,
            news_json: None,
            sources_tsv: None,
            lexicon_tsv: None,
            output_dir: PathBuf::from("out"),
            model: ModelOptions::default(),
            search: SearchConfig::default(),
            probe_epochs: 10,
            granularity: Granularity::Day,
            default_weight: 0.5,
            news_lag_days: 1,
            synth: SynthConfig::default(),
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError {
    message: String,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self { message: message.into() }
    }

    fn at(line: usize, message: impl AsRef<str>) -> Self {
        Self::new(format!("settings line {line}: {}", message.as_ref()))
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

const SECTIONS: [&str; 7] =
    ["paths", "model", "train", "search", "sentiment", "synth", "pipeline"];

pub fn load(path: &Path) -> Result<Settings, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read settings file {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Settings, ConfigError> {
    let mut settings = Settings::default();
    let mut section: Option<String> = None;
    // The target is matched against the feature list only after the whole
    // file is read, so the two keys may appear in either order.
    let mut target: Option<(String, usize)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let name = header
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line_no, "unterminated [section] header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::at(line_no, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::at(line_no, "expected `key = value`"));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(section) = section.as_deref() else {
            return Err(ConfigError::at(line_no, format!("key `{key}` before any [section] header")));
        };
        apply(&mut settings, &mut target, section, key, value, line_no)?;
    }

    resolve_target(&mut settings, target)?;
    validate(&settings)?;
    Ok(settings)
}

fn parse_value<T: FromStr>(value: &str, key: &str, line: usize) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError::at(line, format!("bad value for `{key}`: {e}")))
}

fn apply(
    s: &mut Settings,
    target: &mut Option<(String, usize)>,
    section: &str,
    key: &str,
    value: &str,
    line: usize,
) -> Result<(), ConfigError> {
    match (section, key) {
        ("paths", "stock_csv") => s.stock_csv = Some(PathBuf::from(value)),
        ("paths", "news_json") => s.news_json = Some(PathBuf::from(value)),
        ("paths", "sources_tsv") => s.sources_tsv = Some(PathBuf::from(value)),
        ("paths", "lexicon_tsv") => s.lexicon_tsv = Some(PathBuf::from(value)),
        ("paths", "output_dir") => s.output_dir = PathBuf::from(value),

        ("model", "features") => {
            let mut features = Vec::new();
            for part in value.split(',') {
                let column: FeatureColumn = parse_value(part.trim(), key, line)?;
                if features.contains(&column) {
                    return Err(ConfigError::at(line, format!("duplicate feature `{column}`")));
                }
                features.push(column);
            }
            s.model.features = features;
        }
        ("model", "target") => *target = Some((value.to_string(), line)),
        ("model", "window_len") => s.model.window_len = parse_value(value, key, line)?,
        ("model", "filters") => s.model.filters = parse_value(value, key, line)?,
        ("model", "kernel_width") => s.model.kernel_width = parse_value(value, key, line)?,

        ("train", "learning_rate") => s.model.train.learning_rate = parse_value(value, key, line)?,
        ("train", "epochs") => s.model.train.epochs = parse_value(value, key, line)?,
        ("train", "batch_size") => s.model.train.batch_size = parse_value(value, key, line)?,
        ("train", "loss") => s.model.train.loss = parse_value(value, key, line)?,
        ("train", "huber_delta") => s.model.train.huber_delta = parse_value(value, key, line)?,
        ("train", "grad_clip") => s.model.train.grad_clip = parse_value(value, key, line)?,
        ("train", "seed") => s.model.train.seed = parse_value(value, key, line)?,

        ("search", "initial_len") => s.search.initial_len = parse_value(value, key, line)?,
        ("search", "initial_step") => s.search.initial_step = parse_value(value, key, line)?,
        ("search", "threshold") => s.search.threshold = parse_value(value, key, line)?,
        ("search", "reduction") => s.search.reduction = parse_value(value, key, line)?,
        ("search", "min_step") => s.search.min_step = parse_value(value, key, line)?,
        ("search", "min_len") => s.search.min_len = parse_value(value, key, line)?,
        ("search", "max_len") => s.search.max_len = parse_value(value, key, line)?,
        ("search", "max_iterations") => s.search.max_iterations = parse_value(value, key, line)?,
        ("search", "probe_epochs") => s.probe_epochs = parse_value(value, key, line)?,

        ("sentiment", "granularity") => s.granularity = parse_value(value, key, line)?,
        ("sentiment", "default_weight") => s.default_weight = parse_value(value, key, line)?,
        ("sentiment", "news_lag_days") => s.news_lag_days = parse_value(value, key, line)?,

        ("synth", "days") => s.synth.days = parse_value(value, key, line)?,
        ("synth", "base_price") => s.synth.base_price = parse_value(value, key, line)?,
        ("synth", "volatility") => s.synth.volatility = parse_value(value, key, line)?,
        ("synth", "jump_probability") => s.synth.jump_probability = parse_value(value, key, line)?,
        ("synth", "jump_magnitude") => s.synth.jump_magnitude = parse_value(value, key, line)?,
        ("synth", "articles_min") => s.synth.articles_min = parse_value(value, key, line)?,
        ("synth", "articles_max") => s.synth.articles_max = parse_value(value, key, line)?,
        ("synth", "start_date") => s.synth.start_date = parse_value(value, key, line)?,
        ("synth", "seed") => s.synth.seed = parse_value(value, key, line)?,

        // The run seed: one number fixing both data generation and training.
        ("pipeline", "seed") => {
            let seed: u64 = parse_value(value, key, line)?;
            s.synth.seed = seed;
            s.model.train.seed = seed;
        }
        ("pipeline", "train_fraction") => s.train_fraction = parse_value(value, key, line)?,

        _ => {
            return Err(ConfigError::at(line, format!("unknown key `{key}` in section [{section}]")));
        }
    }
    Ok(())
}

/// Points `target_col` at the named feature, defaulting to the close.
fn resolve_target(
    s: &mut Settings,
    target: Option<(String, usize)>,
) -> Result<(), ConfigError> {
    let (name, line) = match target {
        Some((name, line)) => (name, Some(line)),
        None => ("close".to_string(), None),
    };
    let column: FeatureColumn = match line {
        Some(line) => parse_value(&name, "target", line)?,
        None => FeatureColumn::Close,
    };
    match s.model.features.iter().position(|f| *f == column) {
        Some(idx) => {
            s.model.target_col = idx;
            Ok(())
        }
        None => match line {
            Some(line) => Err(ConfigError::at(
                line,
                format!("target `{name}` is not among the features"),
            )),
            None => Err(ConfigError::new(
                "features omit `close`; set `target` to one of them".to_string(),
            )),
        },
    }
}

/// Enforces the owning modules' invariants and input-path existence at load
/// time, so a bad file fails fast instead of at the middle of a run.
fn validate(s: &Settings) -> Result<(), ConfigError> {
    let inputs = [
        ("stock_csv", &s.stock_csv),
        ("news_json", &s.news_json),
        ("sources_tsv", &s.sources_tsv),
        ("lexicon_tsv", &s.lexicon_tsv),
    ];
    for (label, path) in inputs {
        if let Some(p) = path {
            if !p.is_file() {
                return Err(ConfigError::new(format!(
                    "{label} path {} does not exist",
                    p.display()
                )));
            }
        }
    }
    let module = |e: &dyn fmt::Display| ConfigError::new(e.to_string());
    if s.model.features.is_empty() {
        return Err(ConfigError::new("features must not be empty"));
    }
    Geometry::new(s.model.features.len(), s.model.filters, s.model.kernel_width)
        .map_err(|e| module(&e))?;
    if s.model.window_len == 0 {
        return Err(ConfigError::new("window_len must be at least 1"));
    }
    s.model.train.validate().map_err(|e| module(&e))?;
    s.search.validate().map_err(|e| module(&e))?;
    s.synth.validate().map_err(|e| module(&e))?;
    if s.probe_epochs == 0 {
        return Err(ConfigError::new("probe_epochs must be at least 1"));
    }
    if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
        return Err(ConfigError::new(format!(
            "train_fraction {} not in (0, 1)",
            s.train_fraction
        )));
    }
    if !(s.default_weight > 0.0 && s.default_weight <= 1.0) {
        return Err(ConfigError::new(format!(
            "default_weight {} not in (0, 1]",
            s.default_weight
        )));
    }
    if !(0..=30).contains(&s.news_lag_days) {
        return Err(ConfigError::new(format!(
            "news_lag_days {} not in [0, 30]",
            s.news_lag_days
        )));
    }
    Ok(())
}
