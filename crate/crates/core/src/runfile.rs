//! Newline-delimited JSON run files.
//!
//! One record per line:
//!
//! ```text
//! {"q_id": "...", "question": "...", "lang": "ko",
//!  "ctxs": [{"id": "...", "title": "...", "text": "...", "score": "71.3", "is_positive": true}]}
//! ```
//!
//! `score` may be a number or a decimal string. Unknown fields are ignored.
//! Written files may additionally carry `answers`, `total_positives`, and per
//! context `lang` and `orig_rank`; the reader treats `orig_rank` as
//! informational and always ranks candidates by line order.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::lang::LanguageCode;
use crate::model::{Candidate, Passage, Question, RetrievalRun};

#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    q_id: String,
    question: String,
    lang: LanguageCode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_positives: Option<usize>,
    ctxs: Vec<CtxRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CtxRecord {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
    #[serde(
        default,
        deserialize_with = "score_from_number_or_string",
        skip_serializing_if = "Option::is_none"
    )]
    score: Option<f64>,
    #[serde(alias = "has_answer")]
    is_positive: bool,
    #[serde(default = "und", skip_serializing_if = "LanguageCode::is_und")]
    lang: LanguageCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orig_rank: Option<usize>,
}

fn und() -> LanguageCode {
    LanguageCode::UND
}

fn score_from_number_or_string<'de, D: Deserializer<'de>>(
    deserializer: D,
) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Option::<Raw>::deserialize(deserializer)? {
        None => Ok(None),
        Some(Raw::Num(v)) => Ok(Some(v)),
        Some(Raw::Str(s)) => s
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| serde::de::Error::custom(format!("score {s:?} is not a decimal number"))),
    }
}

impl RunRecord {
    fn into_run(self) -> Result<RetrievalRun> {
        let question = Question {
            id: self.q_id,
            text: self.question,
            lang: self.lang,
        };
        let candidates = self
            .ctxs
            .into_iter()
            .enumerate()
            .map(|(i, c)| Candidate {
                passage: Passage {
                    id: c.id,
                    title: c.title,
                    text: c.text,
                    lang: c.lang,
                },
                retriever_score: c.score,
                orig_rank: i + 1,
                is_positive: c.is_positive,
            })
            .collect();
        let run = RetrievalRun {
            question,
            candidates,
            total_positives: self.total_positives,
            answers: self.answers,
        };
        run.validate()?;
        Ok(run)
    }

    fn from_run(run: &RetrievalRun) -> Self {
        RunRecord {
            q_id: run.question.id.clone(),
            question: run.question.text.clone(),
            lang: run.question.lang,
            answers: run.answers.clone(),
            total_positives: run.total_positives,
            ctxs: run
                .candidates
                .iter()
                .enumerate()
                .map(|(i, c)| CtxRecord {
                    id: c.passage.id.clone(),
                    title: c.passage.title.clone(),
                    text: c.passage.text.clone(),
                    score: c.retriever_score,
                    is_positive: c.is_positive,
                    lang: c.passage.lang,
                    orig_rank: (c.orig_rank != i + 1).then_some(c.orig_rank),
                })
                .collect(),
        }
    }
}

/// Parse one record. `line` is only used for error messages.
pub fn parse_run_line(text: &str, line: usize) -> Result<RetrievalRun> {
    let record: RunRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    record.into_run().map_err(|e| match e {
        Error::Validation(message) => Error::Validation(format!("line {line}: {message}")),
        other => other,
    })
}

/// Read runs from any line-oriented source. Blank lines are skipped.
pub fn read_runs<R: BufRead>(reader: R) -> Result<Vec<RetrievalRun>> {
    let mut runs = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let run = parse_run_line(&text, line_no)?;
        if !ids.insert(run.question.id.clone()) {
            return Err(Error::Validation(format!(
                "line {line_no}: duplicate question id {:?}",
                run.question.id
            )));
        }
        runs.push(run);
    }
    Ok(runs)
}

pub fn parse_run_file(path: impl AsRef<Path>) -> Result<Vec<RetrievalRun>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_runs(BufReader::new(file))
}

/// Serialize one run as a single JSON line (no trailing newline).
pub fn run_to_line(run: &RetrievalRun) -> String {
    serde_json::to_string(&RunRecord::from_run(run)).expect("run records always serialize")
}

pub fn write_runs<W: Write>(mut writer: W, runs: &[RetrievalRun]) -> std::io::Result<()> {
    for run in runs {
        writer.write_all(run_to_line(run).as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_run_file(path: impl AsRef<Path>, runs: &[RetrievalRun]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_runs(BufWriter::new(file), runs).map_err(|e| Error::io(path, e))
}
