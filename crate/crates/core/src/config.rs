// SPDX-License-Identifier: Apache-2.0

//! Run configuration: a TOML file with `[inputs]`, `[chunking]`,
//! `[retrieval]`, `[limits]`, `[llm]`, `[chains]`, `[bridge]`, `[mutation]`,
//! and `[output]` sections. Relative paths resolve against the directory of
//! the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::DEFAULT_MAX_DEPTH;
use crate::corpus::ChunkPolicy;
use crate::llm::{Mode, ModelSettings, DEFAULT_MAX_TOKENS, DEFAULT_MODEL};
use crate::mutation::MutationOperator;
use crate::objective::DEFAULT_CONTEXT_BUDGET;
use crate::retrieval::Bm25Params;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub spec_paths: Vec<PathBuf>,
    pub rtl_paths: Vec<PathBuf>,
    pub seed_signal: String,
    #[serde(default)]
    pub top_module: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub k1: f64,
    pub b: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let p = Bm25Params::default();
        RetrievalConfig { k: 5, k1: p.k1, b: p.b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_rounds: usize,
    pub max_depth: usize,
    /// Per-origin cap on enumerated chains.
    pub max_chains: usize,
    pub max_mutants: usize,
    pub context_budget: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_rounds: 64,
            max_depth: DEFAULT_MAX_DEPTH,
            max_chains: 64,
            max_mutants: 50,
            context_budget: DEFAULT_CONTEXT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub mode: String,
    pub fixture_path: Option<PathBuf>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_in_flight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            mode: "replay".into(),
            fixture_path: None,
            model_id: DEFAULT_MODEL.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Follow load-to-driver instead of driver-to-load.
    pub reverse: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeConfig {
    /// Ask the model for the defining lines too and record disagreements.
    pub llm_cross_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    pub operators: Vec<String>,
    pub seed: u64,
    /// Verdict command template; see [`crate::mutation::collect_verdicts`].
    pub verdict_command: Option<String>,
    pub workers: usize,
    /// Formal-tool report to ingest into the metrics record.
    pub fpv_report: Option<PathBuf>,
    pub design_id: Option<String>,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            operators: MutationOperator::ALL.iter().map(|o| o.as_str().to_string()).collect(),
            seed: 7,
            verdict_command: None,
            workers: 4,
            fpv_report: None,
            design_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Defaults to a digest of the config text.
    #[serde(default)]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub chunking: ChunkPolicy,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub chains: ChainConfig,
    #[serde(default)]
    pub bridge: BridgeConfig,
    #[serde(default)]
    pub mutation: MutationConfig,
    pub output: OutputConfig,
    /// Directory relative paths were resolved against; artifacts name
    /// input files relative to it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Parses, resolves relative paths against `base`, and validates.
    pub fn from_toml(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: base.display().to_string(),
            message: e.message().to_string(),
        })?;
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        c.inputs.spec_paths.iter_mut().for_each(abs);
        c.inputs.rtl_paths.iter_mut().for_each(abs);
        c.llm.fixture_path.iter_mut().for_each(abs);
        c.mutation.fpv_report.iter_mut().for_each(abs);
        abs(&mut c.output.dir);
        c.base_dir = base.to_path_buf();
        if c.output.run_id.is_none() {
            let d = Sha256::digest(text.as_bytes());
            c.output.run_id = Some(hex::encode(&d[..6]));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Syntax { message, .. } => ConfigError::Syntax {
                path: path.display().to_string(),
                message,
            },
            e => e,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.inputs.seed_signal.trim().is_empty() {
            return bad("inputs.seed_signal is empty".into());
        }
        if self.inputs.spec_paths.is_empty() {
            return bad("inputs.spec_paths is empty".into());
        }
        if self.inputs.rtl_paths.is_empty() {
            return bad("inputs.rtl_paths is empty".into());
        }
        for p in self.inputs.spec_paths.iter().chain(&self.inputs.rtl_paths) {
            if !p.is_file() {
                return bad(format!("input {} does not exist", p.display()));
            }
        }
        let mode = self.mode()?;
        if mode != Mode::Live && self.llm.fixture_path.is_none() {
            return bad(format!("llm.fixture_path is required in {} mode", self.llm.mode));
        }
        if mode == Mode::Replay {
            if let Some(p) = &self.llm.fixture_path {
                if !p.is_file() {
                    return bad(format!("fixture file {} does not exist", p.display()));
                }
            }
        }
        if let Some(p) = &self.mutation.fpv_report {
            if !p.is_file() {
                return bad(format!("fpv report {} does not exist", p.display()));
            }
        }
        for (name, v) in [
            ("retrieval.k", self.retrieval.k),
            ("limits.max_rounds", self.limits.max_rounds),
            ("limits.max_depth", self.limits.max_depth),
            ("limits.max_chains", self.limits.max_chains),
            ("limits.max_mutants", self.limits.max_mutants),
            ("limits.context_budget", self.limits.context_budget),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.retrieval.k1 > 0.0 && (0.0..=1.0).contains(&self.retrieval.b)) {
            return bad("retrieval needs k1 > 0 and 0 <= b <= 1".into());
        }
        self.operators()?;
        Ok(())
    }

    pub fn mode(&self) -> Result<Mode, ConfigError> {
        self.llm
            .mode
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("llm.mode {:?} is not live, record, or replay", self.llm.mode)))
    }

    pub fn operators(&self) -> Result<BTreeSet<MutationOperator>, ConfigError> {
        self.mutation
            .operators
            .iter()
            .map(|s| s.parse().map_err(|e: crate::mutation::MutationError| ConfigError::Invalid(e.to_string())))
            .collect()
    }

    pub fn model(&self) -> ModelSettings {
        ModelSettings {
            model_id: self.llm.model_id.clone(),
            temperature: self.llm.temperature,
            max_tokens: self.llm.max_tokens,
        }
    }

    pub fn bm25(&self) -> Bm25Params {
        Bm25Params {
            k1: self.retrieval.k1,
            b: self.retrieval.b,
        }
    }

    /// `p` relative to the config directory when it lies inside it.
    pub fn display_path(&self, p: &Path) -> String {
        p.strip_prefix(&self.base_dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    pub fn run_id(&self) -> &str {
        self.output.run_id.as_deref().unwrap_or("unnamed")
    }
}
