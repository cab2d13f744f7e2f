//! Cross-lingual passage retrieval evaluation: exact dense search, question-likelihood
//! re-ranking, language-aware metrics, and translation-based QA augmentation.

pub mod augmentation;
#[cfg(feature = "cli")]
pub mod cli;
#[cfg(feature = "cli")]
pub mod config;
pub mod error;
pub mod lang;
pub mod likelihood;
pub mod metrics;
pub mod model;
mod parallel;
pub mod reranker;
pub mod retrieval;
pub mod runfile;
#[cfg(feature = "http")]
pub mod service;
pub mod tokenize;
pub mod translate;

pub use error::{Error, Result, ServiceError};
pub use lang::{detect_language, LanguageCode};
pub use likelihood::{LikelihoodScore, ReferenceScorer};
pub use model::{Candidate, Passage, QAExample, Question, RetrievalRun};
pub use reranker::{ExperimentMode, FailurePolicy, Reranker, Scorer, ScorerRequest};
pub use retrieval::{top_k, EmbeddingMatrix, SearchResult};
pub use tokenize::{tokenize, TokenSequence};
pub use translate::{IdentityTranslator, MappingTranslator, Translator};
