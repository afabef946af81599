use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::AnalysisConfig;
use crate::corpus::Estimator;
use crate::dataset::DEFAULT_SEED_LIMIT;
use crate::error::{Error, Result};
use crate::gateway::EndpointConfig;
use crate::stages::StageSampling;

pub const DEFAULT_MAX_TOKENS: usize = 3584;
pub const DEFAULT_FAILURE_ABORT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub path: PathBuf,
    #[serde(default = "default_text_field")]
    pub text_field: String,
    #[serde(default = "default_id_field")]
    pub id_field: String,
    #[serde(default = "default_source_label")]
    pub source_label: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default = "default_estimator")]
    pub estimator: String,
}

fn default_text_field() -> String {
    "text".into()
}
fn default_id_field() -> String {
    "id".into()
}
fn default_source_label() -> String {
    "web".into()
}
fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}
fn default_estimator() -> String {
    "bytes4".into()
}

/// Endpoint per model role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Endpoints {
    /// response → instruction model
    #[serde(default)]
    pub backward: Option<EndpointConfig>,
    /// instruction → response model, used for scoring
    #[serde(default)]
    pub forward: Option<EndpointConfig>,
    /// aligned model for rewriting and distillation
    #[serde(default)]
    pub rewriter: Option<EndpointConfig>,
    #[serde(default)]
    pub tokenizer: Option<EndpointConfig>,
    #[serde(default)]
    pub embedder: Option<EndpointConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFlags {
    #[serde(default = "yes")]
    pub filtering: bool,
    #[serde(default = "yes")]
    pub rewriting: bool,
    #[serde(default)]
    pub distilling: bool,
}

fn yes() -> bool {
    true
}

impl Default for StageFlags {
    fn default() -> Self {
        Self {
            filtering: true,
            rewriting: true,
            distilling: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Seeds {
    #[serde(default)]
    pub sample_seed: u64,
    #[serde(default)]
    pub kmeans_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    /// Uniformly sample at most this many documents at ingest.
    #[serde(default)]
    pub max_pairs: Option<usize>,
    /// Abort a stage after this many consecutive endpoint failures.
    #[serde(default = "default_failure_abort")]
    pub consecutive_failure_abort: usize,
}

fn default_failure_abort() -> usize {
    DEFAULT_FAILURE_ABORT
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_pairs: None,
            consecutive_failure_abort: DEFAULT_FAILURE_ABORT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    #[serde(default = "default_ledger")]
    pub ledger: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_ledger() -> PathBuf {
    PathBuf::from("bft-run/ledger.jsonl")
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("bft-run")
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            ledger: default_ledger(),
            output_dir: default_output_dir(),
        }
    }
}

/// Optional template files replacing the built-in stage prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TemplatePaths {
    #[serde(default)]
    pub backtranslation: Option<PathBuf>,
    #[serde(default)]
    pub scoring: Option<PathBuf>,
    #[serde(default)]
    pub rewrite: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedDataConfig {
    /// Line-delimited conversation trees.
    pub path: PathBuf,
    #[serde(default = "default_seed_limit")]
    pub limit: usize,
}

fn default_seed_limit() -> usize {
    DEFAULT_SEED_LIMIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    pub endpoints: Endpoints,
    #[serde(default)]
    pub stages: StageFlags,
    #[serde(default)]
    pub sampling: StageSampling,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub templates: TemplatePaths,
    #[serde(default)]
    pub seed_data: Option<SeedDataConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn require_role(endpoint: &Option<EndpointConfig>, stage: &str, role: &str) -> Result<()> {
    match endpoint {
        Some(config) => config.validate(role),
        None => Err(Error::MissingRole {
            stage: stage.into(),
            role: role.into(),
        }),
    }
}

impl PipelineConfig {
    /// Parses JSON text; unknown keys anywhere in the document are rejected
    /// together.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut unknown = Vec::new();
        let mut de = serde_json::Deserializer::from_str(text);
        let config: PipelineConfig = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Config(e.to_string()))?;
        de.end().map_err(|e| Error::Config(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        require_role(&self.endpoints.backward, "backtranslate", "backward")?;
        if self.stages.filtering {
            require_role(&self.endpoints.forward, "score", "forward")?;
        }
        if self.stages.rewriting {
            require_role(&self.endpoints.rewriter, "rewrite", "rewriter")?;
        }
        if self.stages.distilling {
            require_role(&self.endpoints.rewriter, "distill", "rewriter")?;
        }
        if self.corpus.estimator == "remote" {
            require_role(&self.endpoints.tokenizer, "ingest", "tokenizer")?;
        } else {
            Estimator::from_id(&self.corpus.estimator, None)?;
        }
        if self.analysis.mauve.embedder == "remote" {
            require_role(&self.endpoints.embedder, "analyze", "embedder")?;
        } else if self.analysis.mauve.embedder != "hashed-bow" {
            return Err(Error::Config(format!(
                "unknown embedder `{}`",
                self.analysis.mauve.embedder
            )));
        }
        if self.corpus.max_tokens == 0 {
            return Err(Error::Config("corpus.max_tokens must be positive".into()));
        }
        if self.limits.max_pairs == Some(0) {
            return Err(Error::Config("limits.max_pairs must be positive".into()));
        }
        if self.limits.consecutive_failure_abort == 0 {
            return Err(Error::Config("limits.consecutive_failure_abort must be positive".into()));
        }
        if self.analysis.mauve_seeds == 0 {
            return Err(Error::Config("analysis.mauve_seeds must be positive".into()));
        }
        self.analysis.mauve.validate()?;
        for params in [
            &self.sampling.backtranslate,
            &self.sampling.score,
            &self.sampling.rewrite,
            &self.sampling.distill,
        ] {
            params.validate()?;
        }
        Ok(())
    }

    /// Makes relative paths relative to `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.path);
        fix(&mut self.paths.ledger);
        fix(&mut self.paths.output_dir);
        for path in [
            &mut self.templates.backtranslation,
            &mut self.templates.scoring,
            &mut self.templates.rewrite,
        ]
        .into_iter()
        .flatten()
        {
            fix(path);
        }
        if let Some(seed) = &mut self.seed_data {
            fix(&mut seed.path);
        }
        for endpoint in [
            &mut self.endpoints.backward,
            &mut self.endpoints.forward,
            &mut self.endpoints.rewriter,
            &mut self.endpoints.tokenizer,
            &mut self.endpoints.embedder,
        ]
        .into_iter()
        .flatten()
        {
            if let Some(fixture) = &mut endpoint.mock_fixture {
                fix(fixture);
            }
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = PipelineConfig::from_json(&text)?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    config.resolve_paths(base);
    Ok(config)
}
