//! Domain types shared by every pipeline stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::LanguageCode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub lang: LanguageCode,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: LanguageCode) -> Result<Self> {
        let q = Question {
            id: id.into(),
            text: text.into(),
            lang,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "question {:?} has empty text",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub text: String,
    pub lang: LanguageCode,
}

impl Passage {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        text: impl Into<String>,
        lang: LanguageCode,
    ) -> Result<Self> {
        let p = Passage {
            id: id.into(),
            title: title.into(),
            text: text.into(),
            lang,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::Validation(format!(
                "passage {:?} has empty text",
                self.id
            )));
        }
        Ok(())
    }

    /// `"<title> <text>"`, or just the text when the title is empty.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.text.clone()
        } else {
            format!("{} {}", self.title, self.text)
        }
    }
}

/// One retrieved passage in a ranked list.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub passage: Passage,
    /// Opaque retriever score. Carried through, never used for ordering.
    pub retriever_score: Option<f64>,
    /// 1-based position in the list as originally retrieved.
    pub orig_rank: usize,
    pub is_positive: bool,
}

/// A question with its ranked candidates. The current rank of a candidate is
/// its position in `candidates` plus one.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRun {
    pub question: Question,
    pub candidates: Vec<Candidate>,
    /// Positives among the original top-50, frozen before any re-ranking.
    pub total_positives: Option<usize>,
    /// Gold answers, when the source file carries them.
    pub answers: Vec<String>,
}

/// Size of the original list that defines the recall denominator.
pub const RECALL_POOL: usize = 50;

impl RetrievalRun {
    /// Build a run from candidates in retrieved order, assigning `orig_rank` 1..n.
    pub fn from_ranked(question: Question, candidates: Vec<(Passage, Option<f64>, bool)>) -> Result<Self> {
        let candidates = candidates
            .into_iter()
            .enumerate()
            .map(|(i, (passage, retriever_score, is_positive))| Candidate {
                passage,
                retriever_score,
                orig_rank: i + 1,
                is_positive,
            })
            .collect();
        let run = RetrievalRun {
            question,
            candidates,
            total_positives: None,
            answers: Vec::new(),
        };
        run.validate()?;
        Ok(run)
    }

    /// Checks the invariants of a freshly ingested run.
    pub fn validate(&self) -> Result<()> {
        self.question.validate()?;
        if self.candidates.is_empty() {
            return Err(Error::Validation(format!(
                "question {:?} has no candidates",
                self.question.id
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(self.candidates.len());
        let mut ranks = vec![false; self.candidates.len()];
        for c in &self.candidates {
            c.passage.validate()?;
            if !seen.insert(c.passage.id.as_str()) {
                return Err(Error::Validation(format!(
                    "question {:?} lists passage {:?} more than once",
                    self.question.id, c.passage.id
                )));
            }
            match c.orig_rank.checked_sub(1).and_then(|i| ranks.get_mut(i)) {
                Some(slot) if !*slot => *slot = true,
                _ => {
                    return Err(Error::Validation(format!(
                        "question {:?}: orig_rank values are not a permutation of 1..{}",
                        self.question.id,
                        self.candidates.len()
                    )))
                }
            }
        }
        Ok(())
    }

    /// Positives among the first 50 candidates in current order.
    pub fn count_pool_positives(&self) -> usize {
        self.candidates
            .iter()
            .take(RECALL_POOL)
            .filter(|c| c.is_positive)
            .count()
    }

    /// Freeze the recall denominator from the current (original) order unless
    /// it was already frozen.
    pub fn freeze_total_positives(&mut self) {
        if self.total_positives.is_none() {
            self.total_positives = Some(self.count_pool_positives());
        }
    }
}

/// Origin of an augmented example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub aug_lang: LanguageCode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QAExample {
    pub question: Question,
    pub answers: Vec<String>,
    pub positives: Vec<Passage>,
    pub negatives: Vec<Passage>,
    pub provenance: Option<Provenance>,
}

impl QAExample {
    pub fn validate(&self) -> Result<()> {
        self.question.validate()?;
        if self.answers.is_empty() {
            return Err(Error::Validation(format!(
                "example {:?} has no answers",
                self.question.id
            )));
        }
        if self.answers.iter().any(String::is_empty) {
            return Err(Error::Validation(format!(
                "example {:?} has an empty answer",
                self.question.id
            )));
        }
        Ok(())
    }
}
