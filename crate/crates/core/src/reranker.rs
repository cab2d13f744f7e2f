//! Question-generation likelihood re-ranking.
//!
//! Each of the first `k` retrieved candidates is scored by how likely the
//! question is given the passage, and the list is re-sorted by that score
//! alone. Retriever scores are never read; the original rank only breaks exact
//! ties.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ServiceError};
use crate::lang::{detect_language, LanguageCode};
use crate::likelihood::LikelihoodScore;
use crate::model::{Candidate, Passage, Question, RetrievalRun};
use crate::parallel::map_chunks;
use crate::translate::Translator;

pub const DEFAULT_RERANK_DEPTH: usize = 50;

/// How the question and passage are presented to the scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    /// Passage as is, with a prompt naming the question language.
    DirectPrompt,
    /// Passage translated into the question language, then prompted.
    PassageTranslated,
    /// Question translated into the (detected) passage language, then prompted.
    QuestionTranslated,
    /// Texts unchanged; the question language is passed as a target-language tag.
    LanguageTagged,
}

impl ExperimentMode {
    pub const ALL: [ExperimentMode; 4] = [
        ExperimentMode::DirectPrompt,
        ExperimentMode::PassageTranslated,
        ExperimentMode::QuestionTranslated,
        ExperimentMode::LanguageTagged,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentMode::DirectPrompt => "direct_prompt",
            ExperimentMode::PassageTranslated => "passage_translated",
            ExperimentMode::QuestionTranslated => "question_translated",
            ExperimentMode::LanguageTagged => "language_tagged",
        }
    }
}

impl fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown mode {s:?}; expected one of direct_prompt, passage_translated, question_translated, language_tagged"
                ))
            })
    }
}

/// Everything a scorer sees for one (question, passage) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerRequest {
    pub question_text: String,
    pub question_lang: LanguageCode,
    pub passage_text: String,
    pub passage_lang: LanguageCode,
    pub prompt_suffix: Option<String>,
    pub target_lang_tag: Option<LanguageCode>,
}

impl ScorerRequest {
    /// Bare request with unknown languages and no prompt or tag.
    pub fn plain(question: impl Into<String>, passage: impl Into<String>) -> Self {
        ScorerRequest {
            question_text: question.into(),
            question_lang: LanguageCode::UND,
            passage_text: passage.into(),
            passage_lang: LanguageCode::UND,
            prompt_suffix: None,
            target_lang_tag: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.question_text.is_empty() {
            return Err(Error::Precondition("scorer request has empty question text".into()));
        }
        if self.passage_text.is_empty() {
            return Err(Error::Precondition("scorer request has empty passage text".into()));
        }
        Ok(())
    }
}

/// Question-likelihood scorer. Implementations must tolerate concurrent calls.
pub trait Scorer: Send + Sync {
    fn score(&self, request: &ScorerRequest) -> Result<LikelihoodScore, ServiceError>;

    /// Score many requests; one result per request, in order. Remote scorers
    /// override this to batch wire calls.
    fn score_batch(&self, requests: &[ScorerRequest]) -> Vec<Result<LikelihoodScore, ServiceError>> {
        requests.iter().map(|r| self.score(r)).collect()
    }
}

impl<F> Scorer for F
where
    F: Fn(&ScorerRequest) -> Result<LikelihoodScore, ServiceError> + Send + Sync,
{
    fn score(&self, request: &ScorerRequest) -> Result<LikelihoodScore, ServiceError> {
        self(request)
    }
}

/// The prompt appended to the passage asking for a question in `lang`.
pub fn prompt_for(lang: LanguageCode) -> String {
    format!("Please generate a question in {} for this passage", lang.english_name())
}

fn passage_language(passage: &Passage) -> Result<LanguageCode> {
    let lang = if passage.lang.is_und() {
        detect_language(&passage.text)?
    } else {
        passage.lang
    };
    if lang.is_und() {
        return Err(Error::Precondition("undetectable passage language".into()));
    }
    Ok(lang)
}

/// Build the scorer input for one candidate under `mode`.
///
/// Translations are skipped when source and target language already agree.
pub fn build_request(
    question: &Question,
    passage: &Passage,
    mode: ExperimentMode,
    translator: &dyn Translator,
) -> Result<ScorerRequest> {
    let mut req = ScorerRequest {
        question_text: question.text.clone(),
        question_lang: question.lang,
        passage_text: passage.full_text(),
        passage_lang: passage.lang,
        prompt_suffix: None,
        target_lang_tag: None,
    };
    match mode {
        ExperimentMode::DirectPrompt => {
            req.prompt_suffix = Some(prompt_for(question.lang));
        }
        ExperimentMode::PassageTranslated => {
            if passage.lang != question.lang {
                req.passage_text = translator.translate(&req.passage_text, passage.lang, question.lang)?;
            }
            req.passage_lang = question.lang;
            req.prompt_suffix = Some(prompt_for(question.lang));
        }
        ExperimentMode::QuestionTranslated => {
            let target = passage_language(passage)?;
            if target != question.lang {
                req.question_text = translator.translate(&question.text, question.lang, target)?;
            }
            req.question_lang = target;
            req.passage_lang = target;
            req.prompt_suffix = Some(prompt_for(target));
        }
        ExperimentMode::LanguageTagged => {
            req.target_lang_tag = Some(question.lang);
        }
    }
    if req.question_text.is_empty() || req.passage_text.is_empty() {
        return Err(ServiceError::Protocol("translator returned empty text".into()).into());
    }
    Ok(req)
}

/// Memoizes question translations within one run, since every candidate of a
/// run shares the question.
struct QuestionCache<'a> {
    inner: &'a dyn Translator,
    question: &'a str,
    cache: Mutex<HashMap<(LanguageCode, LanguageCode), String>>,
}

impl Translator for QuestionCache<'_> {
    fn translate(&self, text: &str, src: LanguageCode, tgt: LanguageCode) -> Result<String, ServiceError> {
        if text != self.question {
            return self.inner.translate(text, src, tgt);
        }
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&(src, tgt)) {
            return Ok(hit.clone());
        }
        let out = self.inner.translate(text, src, tgt)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert((src, tgt), out.clone());
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub qg_score: f64,
    pub num_tokens: usize,
}

/// A re-ranked run plus the per-candidate scores behind it, in new order.
#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    pub run: RetrievalRun,
    pub scored: Vec<ScoredCandidate>,
    /// Passage ids of the scored candidates in their input order.
    pub old_order: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    FailFast,
    Skip,
}

impl FromStr for FailurePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fail_fast" => Ok(FailurePolicy::FailFast),
            "skip" => Ok(FailurePolicy::Skip),
            other => Err(Error::Validation(format!(
                "unknown policy {other:?}; expected fail_fast or skip"
            ))),
        }
    }
}

/// A run that could not be re-ranked under the skip policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub q_id: String,
    pub error: String,
    /// True when the failure came from an external service.
    pub service: bool,
}

#[derive(Debug, Default)]
pub struct CorpusOutcome {
    pub reranked: Vec<Reranked>,
    pub errors: Vec<RunError>,
}

/// Re-ranks runs with a fixed scorer, translator and mode.
pub struct Reranker<'a> {
    scorer: &'a dyn Scorer,
    translator: &'a dyn Translator,
    mode: ExperimentMode,
    k: usize,
    workers: usize,
}

impl<'a> Reranker<'a> {
    pub fn new(scorer: &'a dyn Scorer, translator: &'a dyn Translator, mode: ExperimentMode) -> Self {
        Reranker {
            scorer,
            translator,
            mode,
            k: DEFAULT_RERANK_DEPTH,
            workers: 1,
        }
    }

    pub fn depth(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    /// Number of threads used to build requests and score candidates.
    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn rerank(&self, run: &RetrievalRun) -> Result<Reranked> {
        if self.k == 0 {
            return Err(Error::Precondition("rerank depth k must be at least 1".into()));
        }
        if run.candidates.is_empty() {
            return Err(Error::Precondition(format!(
                "question {:?} has no candidates",
                run.question.id
            )));
        }
        let pool = &run.candidates[..run.candidates.len().min(self.k)];
        let translator = QuestionCache {
            inner: self.translator,
            question: &run.question.text,
            cache: Mutex::new(HashMap::new()),
        };

        let requests: Vec<Result<ScorerRequest>> = map_chunks(pool, self.workers, |chunk| {
            chunk
                .iter()
                .map(|c| build_request(&run.question, &c.passage, self.mode, &translator))
                .collect()
        });
        let requests = requests
            .into_iter()
            .zip(pool)
            .map(|(r, c)| r.map_err(|e| candidate_error(c, e)))
            .collect::<Result<Vec<_>>>()?;

        let scores = map_chunks(&requests, self.workers, |chunk| self.scorer.score_batch(chunk));
        if scores.len() != requests.len() {
            return Err(ServiceError::Protocol(format!(
                "scorer returned {} scores for {} requests",
                scores.len(),
                requests.len()
            ))
            .into());
        }

        let mut scored = Vec::with_capacity(pool.len());
        for (c, s) in pool.iter().zip(scores) {
            let s = s.map_err(|e| candidate_error(c, e.into()))?;
            if !s.avg_log_likelihood.is_finite() {
                return Err(candidate_error(
                    c,
                    ServiceError::Protocol(format!("non-finite score {}", s.avg_log_likelihood)).into(),
                ));
            }
            scored.push(ScoredCandidate {
                candidate: c.clone(),
                qg_score: s.avg_log_likelihood,
                num_tokens: s.num_tokens,
            });
        }
        scored.sort_by(|a, b| {
            b.qg_score
                .total_cmp(&a.qg_score)
                .then(a.candidate.orig_rank.cmp(&b.candidate.orig_rank))
        });

        let total_positives = run.total_positives.or_else(|| Some(run.count_pool_positives()));
        Ok(Reranked {
            run: RetrievalRun {
                question: run.question.clone(),
                candidates: scored.iter().map(|s| s.candidate.clone()).collect(),
                total_positives,
                answers: run.answers.clone(),
            },
            old_order: pool.iter().map(|c| c.passage.id.clone()).collect(),
            scored,
        })
    }

    /// Re-rank every run, in input order. Under [`FailurePolicy::FailFast`] the
    /// first failure aborts; under [`FailurePolicy::Skip`] failed runs are
    /// recorded and left out.
    pub fn rerank_corpus(&self, runs: &[RetrievalRun], policy: FailurePolicy) -> Result<CorpusOutcome> {
        let mut outcome = CorpusOutcome::default();
        for run in runs {
            match self.rerank(run) {
                Ok(r) => outcome.reranked.push(r),
                Err(e) if policy == FailurePolicy::Skip => {
                    log::warn!("skipping question {:?}: {e}", run.question.id);
                    outcome.errors.push(RunError {
                        q_id: run.question.id.clone(),
                        service: e.is_service(),
                        error: e.to_string(),
                    });
                }
                Err(e) => {
                    return Err(Error::Run {
                        q_id: run.question.id.clone(),
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(outcome)
    }
}

fn candidate_error(c: &Candidate, e: Error) -> Error {
    Error::Candidate {
        candidate: c.passage.id.clone(),
        source: Box::new(e),
    }
}

/// Re-rank one run with default settings apart from depth `k`.
pub fn rerank(
    run: &RetrievalRun,
    scorer: &dyn Scorer,
    mode: ExperimentMode,
    translator: &dyn Translator,
    k: usize,
) -> Result<RetrievalRun> {
    Reranker::new(scorer, translator, mode)
        .depth(k)
        .rerank(run)
        .map(|r| r.run)
}

/// Per-run line of the rerank report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRecord {
    pub q_id: String,
    pub mode: ExperimentMode,
    pub old_order: Vec<String>,
    pub new_order: Vec<String>,
    pub scores: Vec<CandidateScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub id: String,
    pub orig_rank: usize,
    pub qg_score: f64,
    pub num_tokens: usize,
}

impl Reranked {
    pub fn record(&self, mode: ExperimentMode) -> RerankRecord {
        RerankRecord {
            q_id: self.run.question.id.clone(),
            mode,
            old_order: self.old_order.clone(),
            new_order: self.run.candidates.iter().map(|c| c.passage.id.clone()).collect(),
            scores: self
                .scored
                .iter()
                .map(|s| CandidateScore {
                    id: s.candidate.passage.id.clone(),
                    orig_rank: s.candidate.orig_rank,
                    qg_score: s.qg_score,
                    num_tokens: s.num_tokens,
                })
                .collect(),
        }
    }
}
