//! Runtime configuration.
//!
//! Config files are flat UTF-8 `key = value` text. Keys may be dotted
//! (`llm.backend`); `#` starts a comment line; blank lines are ignored.
//! Values may optionally be wrapped in double quotes. Unknown and duplicate
//! keys are configuration errors that name the offending key and line.
//!
//! Every key has a default, so the empty file (and no file at all) is a
//! valid configuration running the scripted backend with the reference
//! embedder and built-in templates.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::bench::{BenchConfig, BenchMode};
use crate::embedding::{Embedder, ReferenceEmbedder};
use crate::error::{EhcError, Result};
use crate::experience::{
    PromptTemplates, SeedCorpus, INFERENCE_PLACEHOLDERS, INSIGHT_PLACEHOLDERS,
    LABELING_PLACEHOLDERS, REFLECTION_PLACEHOLDERS, TRAJECTORY_PLACEHOLDERS,
};
use crate::llm::{
    CompletionBackend, HttpBackend, HttpBackendConfig, HttpEmbedder, HttpEmbedderConfig,
    ScriptedBackend,
};
use crate::template::Template;

/// Which embedder implementation a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbedderChoice {
    /// The deterministic hashing embedder built into this crate.
    #[default]
    Reference,
    /// A remote embedding endpoint speaking the HTTP gateway protocol.
    External,
}

/// Which completion backend a run talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendChoice {
    /// Deterministic rule-matching backend driven by a script file.
    #[default]
    Scripted,
    /// Live chat-completion endpoint.
    Http,
}

/// Completion-backend connection settings.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LlmSettings {
    pub backend: BackendChoice,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub script_path: Option<PathBuf>,
}

/// Embedder selection plus the endpoint used when it is external.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EmbeddingSettings {
    pub choice: EmbedderChoice,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

/// Optional template-file overrides; `None` uses the built-in text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplatePaths {
    pub trajectory: Option<PathBuf>,
    pub reflection: Option<PathBuf>,
    pub labeling: Option<PathBuf>,
    pub insight: Option<PathBuf>,
    pub inference: Option<PathBuf>,
}

/// Default report file the benchmark writes next to the working directory.
pub const DEFAULT_REPORT_PATH: &str = "ehc-report.txt";

/// Everything a run needs, assembled from defaults, a config file, and CLI
/// flags (in that order of precedence, lowest first).
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub bench: BenchConfig,
    pub mode: BenchMode,
    pub embedding: EmbeddingSettings,
    pub llm: LlmSettings,
    pub templates: TemplatePaths,
    /// Exemplar corpus file; `None` uses the built-in corpus.
    pub seed_corpus_path: Option<PathBuf>,
    /// Deep-store snapshot; `None` keeps memory in-process only.
    pub store_path: Option<PathBuf>,
    pub report_path: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            bench: BenchConfig {
                seed: 42,
                tasks_per_category: 10,
                capacity: 64,
                dim: 256,
                retrieval_k: 4,
                theta: 0.7,
                deep_theta_gate: false,
                max_attempts: 3,
                max_tokens: 256,
                temperature: 0.0,
                seed_examples_per_category: 5,
                insight_initial_weight: 2,
                insight_max_per_category: 20,
                segment_len: 3,
                max_pairs: 8,
                max_groups: 4,
                insight_rounds: 2,
            },
            mode: BenchMode::Baseline,
            embedding: EmbeddingSettings::default(),
            llm: LlmSettings::default(),
            templates: TemplatePaths::default(),
            seed_corpus_path: None,
            store_path: None,
            report_path: PathBuf::from(DEFAULT_REPORT_PATH),
        }
    }
}

/// Strips one pair of surrounding double quotes, if present.
fn unquote(value: &str) -> &str {
    value
        .strip_prefix('"')
        .and_then(|v| v.strip_suffix('"'))
        .unwrap_or(value)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        EhcError::Config(format!("key `{key}`: invalid value `{value}`"))
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(EhcError::Config(format!(
            "key `{key}`: expected true or false, got `{other}`"
        ))),
    }
}

impl Settings {
    /// Parses config text. `origin` names the source in error messages
    /// (a file path, or something like "--set flag").
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut settings = Self::default();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = index + 1;
            let located = |msg: String| {
                EhcError::Config(format!("{origin} line {lineno}: {msg}"))
            };
            let Some((key, value)) = line.split_once('=') else {
                return Err(located(format!("expected `key = value`, got `{line}`")));
            };
            let key = key.trim();
            let value = unquote(value.trim());
            if key.is_empty() {
                return Err(located("empty key".into()));
            }
            if !seen.insert(key.to_owned()) {
                return Err(located(format!("duplicate key `{key}`")));
            }
            settings.apply(key, value).map_err(|e| match e {
                EhcError::Config(msg) => located(msg),
                other => other,
            })?;
        }
        Ok(settings)
    }

    /// Loads and parses a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            EhcError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies one key/value pair. Unknown keys are configuration errors.
    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.bench.seed = parse_num(key, value)?,
            "tasks_per_category" => self.bench.tasks_per_category = parse_num(key, value)?,
            "capacity" => self.bench.capacity = parse_num(key, value)?,
            "dim" => self.bench.dim = parse_num(key, value)?,
            "retrieval_k" => self.bench.retrieval_k = parse_num(key, value)?,
            "theta" => self.bench.theta = parse_num(key, value)?,
            "deep_theta_gate" => self.bench.deep_theta_gate = parse_bool(key, value)?,
            "max_attempts" => self.bench.max_attempts = parse_num(key, value)?,
            "seed_examples_per_category" => {
                self.bench.seed_examples_per_category = parse_num(key, value)?
            }
            "insight_initial_weight" => {
                self.bench.insight_initial_weight = parse_num(key, value)?
            }
            "insight_max_per_category" => {
                self.bench.insight_max_per_category = parse_num(key, value)?
            }
            "segment_len" => self.bench.segment_len = parse_num(key, value)?,
            "max_pairs" => self.bench.max_pairs = parse_num(key, value)?,
            "max_groups" => self.bench.max_groups = parse_num(key, value)?,
            "insight_rounds" => self.bench.insight_rounds = parse_num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "embedder" => {
                self.embedding.choice = match value {
                    "reference" => EmbedderChoice::Reference,
                    "external" => EmbedderChoice::External,
                    other => {
                        return Err(EhcError::Config(format!(
                            "key `embedder`: expected reference or external, got `{other}`"
                        )))
                    }
                }
            }
            "embedding.endpoint" => self.embedding.endpoint = Some(value.to_owned()),
            "embedding.model" => self.embedding.model = Some(value.to_owned()),
            "llm.backend" => {
                self.llm.backend = match value {
                    "scripted" => BackendChoice::Scripted,
                    "http" => BackendChoice::Http,
                    other => {
                        return Err(EhcError::Config(format!(
                            "key `llm.backend`: expected scripted or http, got `{other}`"
                        )))
                    }
                }
            }
            "llm.endpoint" => self.llm.endpoint = Some(value.to_owned()),
            "llm.model" => self.llm.model = Some(value.to_owned()),
            "llm.script_path" => self.llm.script_path = Some(PathBuf::from(value)),
            "llm.temperature" => self.bench.temperature = parse_num(key, value)?,
            "llm.max_tokens" => self.bench.max_tokens = parse_num(key, value)?,
            "trajectory_template" => self.templates.trajectory = Some(PathBuf::from(value)),
            "reflection_template" => self.templates.reflection = Some(PathBuf::from(value)),
            "labeling_template" => self.templates.labeling = Some(PathBuf::from(value)),
            "insight_template" => self.templates.insight = Some(PathBuf::from(value)),
            "inference_template" => self.templates.inference = Some(PathBuf::from(value)),
            "seed_corpus" => self.seed_corpus_path = Some(PathBuf::from(value)),
            "store_path" => self.store_path = Some(PathBuf::from(value)),
            "report_path" => self.report_path = PathBuf::from(value),
            other => {
                return Err(EhcError::Config(format!("unknown key `{other}`")))
            }
        }
        Ok(())
    }

    /// Loads the five prompt templates, preferring configured paths and
    /// falling back to the built-in text per template.
    pub fn load_templates(&self) -> Result<PromptTemplates> {
        let mut templates = PromptTemplates::defaults();
        if let Some(p) = &self.templates.trajectory {
            templates.trajectory = Template::load(p, TRAJECTORY_PLACEHOLDERS)?;
        }
        if let Some(p) = &self.templates.reflection {
            templates.reflection = Template::load(p, REFLECTION_PLACEHOLDERS)?;
        }
        if let Some(p) = &self.templates.labeling {
            templates.labeling = Template::load(p, LABELING_PLACEHOLDERS)?;
        }
        if let Some(p) = &self.templates.insight {
            templates.insight = Template::load(p, INSIGHT_PLACEHOLDERS)?;
        }
        if let Some(p) = &self.templates.inference {
            templates.inference = Template::load(p, INFERENCE_PLACEHOLDERS)?;
        }
        Ok(templates)
    }

    /// Loads the seed corpus, preferring the configured path and falling
    /// back to the built-in exemplars.
    pub fn load_seed_corpus(&self) -> Result<SeedCorpus> {
        match &self.seed_corpus_path {
            Some(path) => SeedCorpus::load(path),
            None => Ok(SeedCorpus::defaults()),
        }
    }

    /// Builds the completion backend these settings describe.
    ///
    /// The HTTP credential, if any, comes from the `EHC_LLM_API_KEY`
    /// environment variable; config files never carry it.
    pub fn build_backend(&self, trace: bool) -> Result<Box<dyn CompletionBackend>> {
        match self.llm.backend {
            BackendChoice::Scripted => {
                let path = self.llm.script_path.as_ref().ok_or_else(|| {
                    EhcError::Config(
                        "llm.backend = scripted requires llm.script_path".into(),
                    )
                })?;
                Ok(Box::new(ScriptedBackend::load(path)?))
            }
            BackendChoice::Http => {
                let endpoint = self.llm.endpoint.as_ref().ok_or_else(|| {
                    EhcError::Config("llm.backend = http requires llm.endpoint".into())
                })?;
                let model = self.llm.model.as_ref().ok_or_else(|| {
                    EhcError::Config("llm.backend = http requires llm.model".into())
                })?;
                let mut config = HttpBackendConfig::new(endpoint, model);
                config.trace = trace;
                Ok(Box::new(HttpBackend::new(config)?))
            }
        }
    }

    /// Builds the embedder these settings describe.
    pub fn build_embedder(&self, trace: bool) -> Result<Box<dyn Embedder>> {
        match self.embedding.choice {
            EmbedderChoice::Reference => {
                Ok(Box::new(ReferenceEmbedder::new(self.bench.dim)))
            }
            EmbedderChoice::External => {
                let endpoint = self.embedding.endpoint.as_ref().ok_or_else(|| {
                    EhcError::Config(
                        "embedder = external requires embedding.endpoint".into(),
                    )
                })?;
                let model = self.embedding.model.as_ref().ok_or_else(|| {
                    EhcError::Config(
                        "embedder = external requires embedding.model".into(),
                    )
                })?;
                let mut config = HttpEmbedderConfig::new(endpoint, model, self.bench.dim);
                config.trace = trace;
                Ok(Box::new(HttpEmbedder::new(config)?))
            }
        }
    }
}
