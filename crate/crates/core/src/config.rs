//! Pipeline configuration file (TOML). Command-line flags override it.
//!
//! ```toml
//! workers = 8
//! policy = "skip"
//! output = "out"
//!
//! [rerank]
//! mode = "passage_translated"
//! k = 50
//!
//! [evaluate]
//! ks = [5, 15]
//! mrr_mode = "first"
//!
//! [scorer]
//! url = "http://127.0.0.1:8080"
//! batch_size = 64
//!
//! [translator]
//! mapping_file = "mapping.json"
//!
//! [augment]
//! target_langs = ["ko", "bn"]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::augmentation::AugmentationConfig;
use crate::error::{Error, Result};
use crate::metrics::{MrrMode, DEFAULT_KS};
use crate::reranker::{ExperimentMode, FailurePolicy, DEFAULT_RERANK_DEPTH};
use crate::service::ServiceEndpoint;

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub workers: Option<usize>,
    pub policy: FailurePolicy,
    pub output: Option<PathBuf>,
    pub rerank: RerankSection,
    pub evaluate: EvaluateSection,
    pub scorer: EndpointSection,
    pub translator: TranslatorSection,
    pub augment: AugmentationConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankSection {
    pub mode: ExperimentMode,
    pub k: usize,
}

impl Default for RerankSection {
    fn default() -> Self {
        RerankSection {
            mode: ExperimentMode::DirectPrompt,
            k: DEFAULT_RERANK_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub ks: Vec<usize>,
    pub mrr_mode: MrrMode,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            ks: DEFAULT_KS.to_vec(),
            mrr_mode: MrrMode::First,
        }
    }
}

/// Connection settings for a service; without `url` the built-in is used.
#[derive(Debug, Clone, PartialEq, Eq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointSection {
    pub url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub batch_size: Option<usize>,
    pub backoff_base_ms: Option<u64>,
    pub parallelism: Option<usize>,
}

impl EndpointSection {
    pub fn endpoint(&self, url: &str) -> ServiceEndpoint {
        let d = ServiceEndpoint::default();
        ServiceEndpoint {
            base_url: url.to_owned(),
            timeout_ms: self.timeout_ms.unwrap_or(d.timeout_ms),
            max_retries: self.max_retries.unwrap_or(d.max_retries),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            backoff_base_ms: self.backoff_base_ms.unwrap_or(d.backoff_base_ms),
            parallelism: self.parallelism.unwrap_or(d.parallelism),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslatorSection {
    pub mapping_file: Option<PathBuf>,
    pub url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub batch_size: Option<usize>,
    pub backoff_base_ms: Option<u64>,
    pub parallelism: Option<usize>,
}

impl TranslatorSection {
    pub fn endpoint_section(&self) -> EndpointSection {
        EndpointSection {
            url: self.url.clone(),
            timeout_ms: self.timeout_ms,
            max_retries: self.max_retries,
            batch_size: self.batch_size,
            backoff_base_ms: self.backoff_base_ms,
            parallelism: self.parallelism,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    /// Load a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(out) = &config.output {
            config.output = Some(base.join(out));
        }
        if let Some(m) = &config.translator.mapping_file {
            config.translator.mapping_file = Some(base.join(m));
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == Some(0) {
            return Err(Error::Validation("workers must be at least 1".into()));
        }
        if self.rerank.k == 0 {
            return Err(Error::Validation("rerank depth k must be at least 1".into()));
        }
        if self.evaluate.ks.is_empty() || self.evaluate.ks.contains(&0) {
            return Err(Error::Validation("metric cutoffs must be positive and non-empty".into()));
        }
        let max_k = self.evaluate.ks.iter().copied().max().unwrap_or(0);
        if self.rerank.k < max_k {
            return Err(Error::Validation(format!(
                "rerank depth {} is smaller than the largest metric cutoff {max_k}",
                self.rerank.k
            )));
        }
        if let Some(url) = &self.scorer.url {
            self.scorer.endpoint(url).validate()?;
        }
        if self.translator.mapping_file.is_some() && self.translator.url.is_some() {
            return Err(Error::Validation("translator: set mapping_file or url, not both".into()));
        }
        if let Some(url) = &self.translator.url {
            self.translator.endpoint_section().endpoint(url).validate()?;
        }
        if let Some(m) = &self.translator.mapping_file {
            if !m.is_file() {
                return Err(Error::Validation(format!("mapping file {} not found", m.display())));
            }
        }
        self.augment.validate()
    }
}
