//! Browser bindings for the xlrank demo page. Every export takes and returns
//! JSON text so the page needs no generated glue beyond strings.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use xlrank::augmentation::build_reader_input;
use xlrank::likelihood::score;
use xlrank::metrics::{mrr, positives_at_k, recall_at_k, resolve_languages, MrrMode, MrrSubset};
use xlrank::reranker::Reranker;
use xlrank::{tokenize, ExperimentMode, IdentityTranslator, LanguageCode, Passage, Question, ReferenceScorer, RetrievalRun};

#[derive(Debug, Deserialize)]
pub struct DemoPassage {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub lang: Option<LanguageCode>,
    #[serde(default)]
    pub is_positive: bool,
}

#[derive(Debug, Deserialize)]
pub struct RerankInput {
    pub question: String,
    pub lang: LanguageCode,
    pub passages: Vec<DemoPassage>,
    #[serde(default)]
    pub mode: Option<ExperimentMode>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct RankedPassage {
    pub id: String,
    pub orig_rank: usize,
    pub qg_score: f64,
    pub is_positive: bool,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Summary {
    pub positives_at_5: usize,
    pub recall_at_5: Option<f64>,
    pub mrr_same: f64,
    pub mrr_cross: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct RerankOutput {
    pub ranked: Vec<RankedPassage>,
    pub before: Summary,
    pub after: Summary,
}

fn summarize(run: &RetrievalRun) -> Summary {
    let mut run = run.clone();
    resolve_languages(&mut run);
    let m = |subset| mrr(&run, subset, MrrMode::First).unwrap_or(0.0);
    Summary {
        positives_at_5: positives_at_k(&run, 5),
        recall_at_5: recall_at_k(&run, 5),
        mrr_same: m(MrrSubset::Same),
        mrr_cross: m(MrrSubset::Cross),
    }
}

/// Re-rank passages with the built-in scorer; shows the new order and metrics.
pub fn rerank_json(input: &str) -> Result<String, String> {
    let input: RerankInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let question = Question::new("demo", input.question, input.lang).map_err(|e| e.to_string())?;
    let candidates = input
        .passages
        .into_iter()
        .map(|p| {
            let lang = p.lang.unwrap_or(LanguageCode::UND);
            Passage::new(p.id, p.title, p.text, lang).map(|passage| (passage, None, p.is_positive))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let mut run = RetrievalRun::from_ranked(question, candidates).map_err(|e| e.to_string())?;
    run.freeze_total_positives();
    // No threads in the browser.
    let mut reranker = Reranker::new(&ReferenceScorer, &IdentityTranslator, input.mode.unwrap_or(ExperimentMode::DirectPrompt)).workers(1);
    if let Some(k) = input.k {
        reranker = reranker.depth(k);
    }
    let out = reranker.rerank(&run).map_err(|e| e.to_string())?;
    let output = RerankOutput {
        ranked: out
            .scored
            .iter()
            .map(|s| RankedPassage {
                id: s.candidate.passage.id.clone(),
                orig_rank: s.candidate.orig_rank,
                qg_score: s.qg_score,
                is_positive: s.candidate.is_positive,
            })
            .collect(),
        before: summarize(&run),
        after: summarize(&out.run),
    };
    Ok(serde_json::to_string(&output).expect("output serializes"))
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ScoreOutput {
    pub question_tokens: Vec<String>,
    pub passage_tokens: Vec<String>,
    pub avg_log_likelihood: f64,
    pub num_tokens: usize,
}

/// Tokenize both texts and score the question against the passage.
pub fn score_json(question: &str, passage: &str) -> Result<String, String> {
    let q = tokenize(question);
    let z = tokenize(passage);
    let s = score(&q, &z).map_err(|e| e.to_string())?;
    let out = ScoreOutput {
        question_tokens: q.into_inner(),
        passage_tokens: z.into_inner(),
        avg_log_likelihood: s.avg_log_likelihood,
        num_tokens: s.num_tokens,
    };
    Ok(serde_json::to_string(&out).expect("output serializes"))
}

#[derive(Debug, Deserialize)]
pub struct ReaderInput {
    pub question: String,
    #[serde(default)]
    pub lang: Option<LanguageCode>,
    pub passages: Vec<DemoPassage>,
    pub max_input_tokens: usize,
}

/// Pack passages into a reader context under a token budget.
pub fn reader_input_json(input: &str) -> Result<String, String> {
    let input: ReaderInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let question = Question::new("demo", input.question, input.lang.unwrap_or(LanguageCode::UND)).map_err(|e| e.to_string())?;
    let passages = input
        .passages
        .into_iter()
        .map(|p| Passage::new(p.id, p.title, p.text, p.lang.unwrap_or(LanguageCode::UND)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let record = build_reader_input(&question, &passages, &[], input.max_input_tokens).map_err(|e| e.to_string())?;
    let used = xlrank::tokenize::count_tokens(&record.question_text) + xlrank::tokenize::count_tokens(&record.context);
    let mut value = serde_json::to_value(&record).expect("record serializes");
    value["tokens_used"] = used.into();
    Ok(value.to_string())
}

#[wasm_bindgen]
pub fn rerank(input: &str) -> Result<String, JsValue> {
    rerank_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn score_question(question: &str, passage: &str) -> Result<String, JsValue> {
    score_json(question, passage).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn reader_input(input: &str) -> Result<String, JsValue> {
    reader_input_json(input).map_err(|e| JsValue::from_str(&e))
}
