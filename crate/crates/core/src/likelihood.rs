//! Built-in question-likelihood scorer.
//!
//! The score is the mean natural-log probability of the question tokens under
//! an add-one smoothed unigram model of the passage:
//!
//! ```text
//! p(t | z) = (count(t, z) + 1) / (|z| + distinct(z) + 1)
//! score    = (1 / |q|) * sum_t ln p(q_t | z)
//! ```
//!
//! It is not autoregressive: each question token is scored independently of
//! the tokens before it. Neural scorers with real conditioning are reached
//! through [`crate::service`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ServiceError};
use crate::reranker::{Scorer, ScorerRequest};
use crate::tokenize::{tokenize, TokenSequence};

/// Mean log-likelihood of a question, with the token count it was averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodScore {
    pub avg_log_likelihood: f64,
    pub num_tokens: usize,
}

pub fn score(question: &TokenSequence, passage: &TokenSequence) -> Result<LikelihoodScore> {
    if question.is_empty() {
        return Err(Error::Precondition("question has no tokens".into()));
    }
    if passage.is_empty() {
        return Err(Error::Precondition("passage has no tokens".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::with_capacity(passage.len());
    for t in passage.tokens() {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let denom = (passage.len() + counts.len() + 1) as f64;
    let mut sum = 0.0f64;
    for t in question.tokens() {
        let c = counts.get(t.as_str()).copied().unwrap_or(0);
        sum += ((c + 1) as f64 / denom).ln();
    }
    Ok(LikelihoodScore {
        avg_log_likelihood: sum / question.len() as f64,
        num_tokens: question.len(),
    })
}

/// [`Scorer`] backed by [`score`]. Stateless, so safe to share across threads.
///
/// Only `question_text` and `passage_text` are used: a unigram model has no
/// way to act on a prompt suffix or a target-language tag.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceScorer;

impl Scorer for ReferenceScorer {
    fn score(&self, request: &ScorerRequest) -> Result<LikelihoodScore, ServiceError> {
        score(&tokenize(&request.question_text), &tokenize(&request.passage_text))
            .map_err(|e| ServiceError::Other(e.to_string()))
    }
}
