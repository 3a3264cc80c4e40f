//! Experiment configuration: one TOML file, every field overridable by a flag.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use cfprobe_core::color::ColorMetric;
use cfprobe_core::eval::CorrectnessRule;
use cfprobe_core::explain::MiningParams;
use cfprobe_core::kind::PerturbationKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const ENDPOINT_URL_ENV: &str = "CFPROBE_ENDPOINT_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Vqa2,
    Vg,
    Toy,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vqa2" => Ok(DatasetFormat::Vqa2),
            "vg" => Ok(DatasetFormat::Vg),
            "toy" => Ok(DatasetFormat::Toy),
            other => Err(format!("unknown dataset format {other:?} (expected vqa2, vg or toy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub format: Option<DatasetFormat>,
    /// Question file: toy JSONL, VQA v2 questions JSON or Visual Genome QA JSON.
    pub questions: Option<PathBuf>,
    /// VQA v2 annotations JSON; required for `vqa2` only.
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointMode {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub mode: Option<EndpointMode>,
    pub url: Option<String>,
    pub table: Option<PathBuf>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_secs() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    250
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            mode: None,
            url: None,
            table: None,
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correctness {
    /// `vqa-soft` for VQA v2, `exact-any` otherwise.
    #[default]
    Auto,
    ExactAny,
    VqaSoft,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorMode {
    /// The perturbed color or word lemma.
    #[default]
    Lemma,
    /// The first lemma of the word's first hypernym.
    Hypernym,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningConfig {
    #[serde(default = "default_min_support")]
    pub min_support: usize,
    #[serde(default = "default_stable")]
    pub stable_threshold: f64,
    #[serde(default = "default_volatile")]
    pub volatile_threshold: f64,
    #[serde(default)]
    pub anchor: AnchorMode,
}

fn default_min_support() -> usize {
    MiningParams::default().min_support
}

fn default_stable() -> f64 {
    MiningParams::default().stable_threshold
}

fn default_volatile() -> f64 {
    MiningParams::default().volatile_threshold
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            min_support: default_min_support(),
            stable_threshold: default_stable(),
            volatile_threshold: default_volatile(),
            anchor: AnchorMode::default(),
        }
    }
}

impl MiningConfig {
    pub fn params(&self) -> MiningParams {
        MiningParams {
            min_support: self.min_support,
            stable_threshold: self.stable_threshold,
            volatile_threshold: self.volatile_threshold,
        }
    }
}

/// The configuration file as written; relative paths resolve against the
/// file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    pub wordnet_dir: Option<PathBuf>,
    pub colors: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub color_metric: Option<ColorMetric>,
    pub kinds: Option<Vec<PerturbationKind>>,
    pub seed: Option<u64>,
    pub endpoint: Option<EndpointConfig>,
    pub parallelism: Option<usize>,
    pub correctness: Option<Correctness>,
    pub mining: Option<MiningConfig>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut config: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        if let Some(d) = &mut self.dataset {
            fix(&mut d.questions);
            fix(&mut d.annotations);
        }
        fix(&mut self.wordnet_dir);
        fix(&mut self.colors);
        fix(&mut self.stoplist);
        if let Some(e) = &mut self.endpoint {
            fix(&mut e.table);
        }
        fix(&mut self.out);
    }
}

/// Command-line values that take precedence over the file. Paths are used as given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dataset_format: Option<DatasetFormat>,
    pub questions: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub wordnet_dir: Option<PathBuf>,
    pub colors: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub color_metric: Option<ColorMetric>,
    pub kinds: Vec<PerturbationKind>,
    pub seed: Option<u64>,
    pub endpoint_url: Option<String>,
    pub mock_table: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub correctness: Option<Correctness>,
    pub min_support: Option<usize>,
    pub stable_threshold: Option<f64>,
    pub volatile_threshold: Option<f64>,
    pub anchor: Option<AnchorMode>,
    pub out: Option<PathBuf>,
    /// Value of the endpoint URL environment variable, consulted last.
    pub env_endpoint_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EndpointSpec {
    Http {
        url: String,
        timeout: Duration,
        retries: u32,
        backoff: Duration,
    },
    Mock {
        table: PathBuf,
    },
}

/// A validated configuration: every path exists and every value is in range.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset_format: DatasetFormat,
    pub questions: PathBuf,
    pub annotations: Option<PathBuf>,
    pub wordnet_dir: PathBuf,
    pub colors: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub color_metric: ColorMetric,
    pub kinds: Vec<PerturbationKind>,
    pub seed: u64,
    pub endpoint: Option<EndpointSpec>,
    pub parallelism: usize,
    pub correctness: CorrectnessRule,
    pub mining: MiningConfig,
    pub out: PathBuf,
}

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_PARALLELISM: usize = 4;

const WORDNET_FILES: &[&str] = &[
    "index.noun", "index.verb", "index.adj", "index.adv", "data.noun", "data.verb", "data.adj",
    "data.adv", "noun.exc", "verb.exc", "adj.exc", "adv.exc",
];

fn require_file(what: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} does not exist or is not a file", path.display())))
    }
}

impl ExperimentConfig {
    /// Merges the file (if any) with overrides and validates the result.
    pub fn build(file: FileConfig, o: Overrides) -> Result<ExperimentConfig, CliError> {
        let dataset = file.dataset.unwrap_or(DatasetConfig {
            format: None,
            questions: None,
            annotations: None,
        });
        let dataset_format = o.dataset_format.or(dataset.format).ok_or_else(|| {
            CliError::Config("dataset format is not set (dataset.format or --dataset-format)".into())
        })?;
        let questions = o.questions.or(dataset.questions).ok_or_else(|| {
            CliError::Config("question file is not set (dataset.questions or --questions)".into())
        })?;
        require_file("question file", &questions)?;
        let annotations = o.annotations.or(dataset.annotations);
        match (dataset_format, &annotations) {
            (DatasetFormat::Vqa2, None) => {
                return Err(CliError::Config(
                    "vqa2 datasets need an annotations file (dataset.annotations or --annotations)"
                        .into(),
                ))
            }
            (_, Some(path)) => require_file("annotations file", path)?,
            _ => {}
        }

        let wordnet_dir = o.wordnet_dir.or(file.wordnet_dir).ok_or_else(|| {
            CliError::Config("WordNet directory is not set (wordnet_dir or --wordnet-dir)".into())
        })?;
        if !wordnet_dir.is_dir() {
            return Err(CliError::Config(format!(
                "wordnet_dir {} is not a directory",
                wordnet_dir.display()
            )));
        }
        if let Some(missing) = WORDNET_FILES.iter().find(|f| !wordnet_dir.join(f).is_file()) {
            return Err(CliError::Config(format!(
                "wordnet_dir {} lacks {missing}; point it at a WordNet 3.x dict directory",
                wordnet_dir.display()
            )));
        }
        let colors = o.colors.or(file.colors);
        if let Some(path) = &colors {
            require_file("color table", path)?;
        }
        let stoplist = o.stoplist.or(file.stoplist);
        if let Some(path) = &stoplist {
            require_file("stoplist", path)?;
        }

        let kinds = if o.kinds.is_empty() {
            file.kinds.unwrap_or_else(|| PerturbationKind::ALL.to_vec())
        } else {
            o.kinds
        };
        if kinds.is_empty() {
            return Err(CliError::Config("kinds must not be empty".into()));
        }
        let mut unique = Vec::with_capacity(kinds.len());
        for k in kinds {
            if !unique.contains(&k) {
                unique.push(k);
            }
        }

        let parallelism = o.parallelism.or(file.parallelism).unwrap_or(DEFAULT_PARALLELISM);
        if parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }

        let correctness = match o.correctness.or(file.correctness).unwrap_or_default() {
            Correctness::ExactAny => CorrectnessRule::ExactAny,
            Correctness::VqaSoft => CorrectnessRule::VqaSoft,
            Correctness::Auto if dataset_format == DatasetFormat::Vqa2 => CorrectnessRule::VqaSoft,
            Correctness::Auto => CorrectnessRule::ExactAny,
        };

        let mut mining = file.mining.unwrap_or_default();
        mining.min_support = o.min_support.unwrap_or(mining.min_support);
        mining.stable_threshold = o.stable_threshold.unwrap_or(mining.stable_threshold);
        mining.volatile_threshold = o.volatile_threshold.unwrap_or(mining.volatile_threshold);
        mining.anchor = o.anchor.unwrap_or(mining.anchor);
        mining
            .params()
            .validate()
            .map_err(|e| CliError::Config(format!("mining: {e}")))?;

        let endpoint = resolve_endpoint(file.endpoint.unwrap_or_default(), o.endpoint_url, o.mock_table, o.env_endpoint_url)?;

        Ok(ExperimentConfig {
            dataset_format,
            questions,
            annotations,
            wordnet_dir,
            colors,
            stoplist,
            color_metric: o.color_metric.or(file.color_metric).unwrap_or_default(),
            kinds: unique,
            seed: o.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            endpoint,
            parallelism,
            correctness,
            mining,
            out: o.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    pub fn endpoint(&self) -> Result<&EndpointSpec, CliError> {
        self.endpoint.as_ref().ok_or_else(|| {
            CliError::Config(format!(
                "no endpoint configured: set endpoint.url, endpoint.table, --endpoint-url, \
                 --mock-table or {ENDPOINT_URL_ENV}"
            ))
        })
    }
}

/// Flags beat the file; the environment variable is the last resort for a URL.
fn resolve_endpoint(
    file: EndpointConfig,
    flag_url: Option<String>,
    flag_table: Option<PathBuf>,
    env_url: Option<String>,
) -> Result<Option<EndpointSpec>, CliError> {
    if !(file.timeout_secs.is_finite() && file.timeout_secs > 0.0) {
        return Err(CliError::Config("endpoint.timeout_secs must be a positive number".into()));
    }
    let http = |url: String| {
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(CliError::Config(format!("endpoint URL {url:?} must start with http:// or https://")));
        }
        Ok(Some(EndpointSpec::Http {
            url,
            timeout: Duration::from_secs_f64(file.timeout_secs),
            retries: file.retries,
            backoff: Duration::from_millis(file.backoff_ms),
        }))
    };
    let mock = |table: PathBuf| {
        require_file("mock table", &table)?;
        Ok(Some(EndpointSpec::Mock { table }))
    };
    if let Some(url) = flag_url {
        return http(url);
    }
    if let Some(table) = flag_table {
        return mock(table);
    }
    match file.mode {
        Some(EndpointMode::Mock) => match file.table {
            Some(table) => mock(table),
            None => Err(CliError::Config("endpoint.mode = \"mock\" needs endpoint.table".into())),
        },
        Some(EndpointMode::Http) => match file.url.or(env_url) {
            Some(url) => http(url),
            None => Err(CliError::Config(format!(
                "endpoint.mode = \"http\" needs endpoint.url or {ENDPOINT_URL_ENV}"
            ))),
        },
        None => match (file.url, file.table) {
            (Some(url), _) => http(url),
            (None, Some(table)) => mock(table),
            (None, None) => env_url.map_or(Ok(None), http),
        },
    }
}
