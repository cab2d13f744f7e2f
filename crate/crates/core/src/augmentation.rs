//! Translation-based QA data augmentation and reader-input assembly.
//!
//! English examples are translated into each target language and kept only
//! when a translated answer still appears verbatim in a translated positive
//! paragraph.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::LanguageCode;
use crate::model::{Passage, Provenance, QAExample, Question, RetrievalRun};
use crate::parallel::map_chunks;
use crate::reranker::FailurePolicy;
use crate::tokenize::{count_tokens, normalize, token_spans};
use crate::translate::Translator;

/// Separator placed between passages in a reader context.
pub const PASSAGE_SEPARATOR: &str = " [SEP] ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainmentMode {
    /// Raw substring match.
    #[default]
    Exact,
    /// Substring match after NFKC normalization and lowercasing both sides.
    NfkcCasefold,
}

impl FromStr for ContainmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ContainmentMode::Exact),
            "nfkc_casefold" => Ok(ContainmentMode::NfkcCasefold),
            other => Err(Error::Validation(format!(
                "unknown containment mode {other:?}; expected exact or nfkc_casefold"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub target_langs: Vec<LanguageCode>,
    pub n_examples: usize,
    pub n_pos_paragraphs: usize,
    pub n_neg_paragraphs: usize,
    pub max_input_tokens: usize,
    pub containment: ContainmentMode,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            target_langs: vec![LanguageCode::KO, LanguageCode::BN],
            n_examples: 5000,
            n_pos_paragraphs: 3,
            n_neg_paragraphs: 3,
            max_input_tokens: 600,
            containment: ContainmentMode::Exact,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_langs.is_empty() {
            return Err(Error::Validation("augmentation needs at least one target language".into()));
        }
        if let Some(l) = self.target_langs.iter().find(|l| l.is_und()) {
            return Err(Error::Validation(format!("cannot translate into {l}")));
        }
        for (name, v) in [
            ("n_examples", self.n_examples),
            ("n_pos_paragraphs", self.n_pos_paragraphs),
            ("n_neg_paragraphs", self.n_neg_paragraphs),
            ("max_input_tokens", self.max_input_tokens),
        ] {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Translate question, answers, and the first `n_pos`/`n_neg` paragraphs of an
/// English example into `tgt`. Ids get a `#<tgt>` suffix.
pub fn translate_example(
    example: &QAExample,
    tgt: LanguageCode,
    translator: &dyn Translator,
    config: &AugmentationConfig,
) -> Result<QAExample> {
    let src = example.question.lang;
    if src != LanguageCode::EN {
        return Err(Error::Precondition(format!(
            "example {:?} is in {src}, augmentation expects English sources",
            example.question.id
        )));
    }
    if tgt.is_und() {
        return Err(Error::Precondition("target language must be known".into()));
    }
    let tr = |text: &str| -> Result<String> {
        if text.is_empty() {
            return Ok(String::new());
        }
        let out = translator.translate(text, src, tgt)?;
        if out.is_empty() {
            return Err(Error::Service(crate::error::ServiceError::Protocol(
                "translator returned empty text".into(),
            )));
        }
        Ok(out)
    };
    let suffix = format!("#{tgt}");
    let paragraph = |p: &Passage| -> Result<Passage> {
        Ok(Passage {
            id: format!("{}{suffix}", p.id),
            title: tr(&p.title)?,
            text: tr(&p.text)?,
            lang: tgt,
        })
    };
    let out = QAExample {
        question: Question {
            id: format!("{}{suffix}", example.question.id),
            text: tr(&example.question.text)?,
            lang: tgt,
        },
        answers: example.answers.iter().map(|a| tr(a)).collect::<Result<_>>()?,
        positives: example
            .positives
            .iter()
            .take(config.n_pos_paragraphs)
            .map(paragraph)
            .collect::<Result<_>>()?,
        negatives: example
            .negatives
            .iter()
            .take(config.n_neg_paragraphs)
            .map(paragraph)
            .collect::<Result<_>>()?,
        provenance: Some(Provenance {
            source_id: example.question.id.clone(),
            aug_lang: tgt,
        }),
    };
    Ok(out)
}

/// True when some answer occurs as a substring of some positive paragraph text.
pub fn filter_contains_answer(example: &QAExample, mode: ContainmentMode) -> bool {
    match mode {
        ContainmentMode::Exact => example.answers.iter().any(|a| {
            !a.is_empty() && example.positives.iter().any(|p| p.text.contains(a.as_str()))
        }),
        ContainmentMode::NfkcCasefold => {
            let fold = |s: &str| normalize(s).to_lowercase();
            let texts: Vec<String> = example.positives.iter().map(|p| fold(&p.text)).collect();
            example.answers.iter().any(|a| {
                let a = fold(a);
                !a.is_empty() && texts.iter().any(|t| t.contains(&a))
            })
        }
    }
}

/// Question plus concatenated passages, within a token budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderRecord {
    pub question_text: String,
    pub context: String,
    pub answers: Vec<String>,
    pub lang: LanguageCode,
    /// Passages contributing to `context`.
    pub n_passages: usize,
    /// Whether the single included passage was cut to fit.
    pub truncated: bool,
}

/// Concatenate whole `"<title> <text>"` blocks, separated by
/// [`PASSAGE_SEPARATOR`], while the question and context together stay within
/// `max_input_tokens` reference tokens. If even the first passage does not fit,
/// it is cut after the last token that does.
pub fn build_reader_input(
    question: &Question,
    passages: &[Passage],
    answers: &[String],
    max_input_tokens: usize,
) -> Result<ReaderRecord> {
    if passages.is_empty() {
        return Err(Error::Precondition("reader input needs at least one passage".into()));
    }
    let q_tokens = count_tokens(&question.text);
    if q_tokens >= max_input_tokens {
        return Err(Error::Precondition(format!(
            "question alone uses {q_tokens} tokens, leaving no room in a budget of {max_input_tokens}"
        )));
    }
    let mut context = String::new();
    let mut n = 0;
    for p in passages {
        let block = p.full_text();
        let candidate = if n == 0 {
            block
        } else {
            format!("{context}{PASSAGE_SEPARATOR}{block}")
        };
        if q_tokens + count_tokens(&candidate) > max_input_tokens {
            break;
        }
        context = candidate;
        n += 1;
    }
    let mut truncated = false;
    if n == 0 {
        let normalized = normalize(&passages[0].full_text());
        let spans = token_spans(&normalized);
        let keep = max_input_tokens - q_tokens;
        context = normalized[..spans[keep - 1].end].to_owned();
        debug_assert_eq!(count_tokens(&context), keep);
        n = 1;
        truncated = true;
    }
    Ok(ReaderRecord {
        question_text: question.text.clone(),
        context,
        answers: answers.to_vec(),
        lang: question.lang,
        n_passages: n,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageSummary {
    pub lang: LanguageCode,
    pub kept: usize,
    pub dropped: usize,
    pub errored: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub source_examples: usize,
    pub selected: usize,
    pub per_language: Vec<LanguageSummary>,
    /// `"<source id>#<lang>: <error>"` for each failed translation.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentationOutcome {
    /// Language-major: all kept examples of the first target language, then the next.
    pub kept: Vec<QAExample>,
    pub dropped: usize,
    pub errored: usize,
    pub report: AugmentationReport,
}

/// Translate the first `n_examples` sources into every target language and
/// keep those passing the containment filter.
pub fn augment_corpus(
    source: &[QAExample],
    config: &AugmentationConfig,
    translator: &dyn Translator,
    policy: FailurePolicy,
    workers: usize,
) -> Result<AugmentationOutcome> {
    config.validate()?;
    let selected = &source[..source.len().min(config.n_examples)];
    let mut outcome = AugmentationOutcome {
        report: AugmentationReport {
            source_examples: source.len(),
            selected: selected.len(),
            ..Default::default()
        },
        ..Default::default()
    };
    for &tgt in &config.target_langs {
        let results = map_chunks(selected, workers, |chunk| {
            chunk
                .iter()
                .map(|ex| translate_example(ex, tgt, translator, config))
                .collect()
        });
        let mut summary = LanguageSummary {
            lang: tgt,
            kept: 0,
            dropped: 0,
            errored: 0,
        };
        for (ex, result) in selected.iter().zip(results) {
            match result {
                Ok(translated) if filter_contains_answer(&translated, config.containment) => {
                    summary.kept += 1;
                    outcome.kept.push(translated);
                }
                Ok(_) => summary.dropped += 1,
                Err(e) if policy == FailurePolicy::Skip => {
                    log::warn!("example {:?} -> {tgt}: {e}", ex.question.id);
                    summary.errored += 1;
                    outcome
                        .report
                        .errors
                        .push(format!("{}#{tgt}: {e}", ex.question.id));
                }
                Err(e) => {
                    return Err(Error::Run {
                        q_id: ex.question.id.clone(),
                        source: Box::new(e),
                    })
                }
            }
        }
        outcome.dropped += summary.dropped;
        outcome.errored += summary.errored;
        outcome.report.per_language.push(summary);
    }
    Ok(outcome)
}

/// Build examples from runs that carry answers: flagged candidates become
/// positives, the rest negatives. Returns the examples and the ids of runs
/// without answers.
pub fn examples_from_runs(runs: &[RetrievalRun]) -> (Vec<QAExample>, Vec<String>) {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for run in runs {
        if run.answers.is_empty() || run.answers.iter().any(String::is_empty) {
            skipped.push(run.question.id.clone());
            continue;
        }
        let (pos, neg): (Vec<_>, Vec<_>) = run.candidates.iter().partition(|c| c.is_positive);
        out.push(QAExample {
            question: run.question.clone(),
            answers: run.answers.clone(),
            positives: pos.into_iter().map(|c| c.passage.clone()).collect(),
            negatives: neg.into_iter().map(|c| c.passage.clone()).collect(),
            provenance: None,
        });
    }
    (out, skipped)
}

#[derive(Debug, Serialize, Deserialize)]
struct CtxRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default)]
    title: String,
    text: String,
    #[serde(default = "und", skip_serializing_if = "LanguageCode::is_und")]
    lang: LanguageCode,
}

fn und() -> LanguageCode {
    LanguageCode::UND
}

#[derive(Debug, Serialize, Deserialize)]
struct ExampleRecord {
    id: String,
    question: String,
    lang: LanguageCode,
    answers: Vec<String>,
    #[serde(default)]
    positive_ctxs: Vec<CtxRecord>,
    #[serde(default)]
    negative_ctxs: Vec<CtxRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aug_lang: Option<LanguageCode>,
}

impl ExampleRecord {
    fn into_example(self) -> Result<QAExample> {
        let ctxs = |list: Vec<CtxRecord>, tag: &str| -> Vec<Passage> {
            list.into_iter()
                .enumerate()
                .map(|(i, c)| Passage {
                    id: c.id.unwrap_or_else(|| format!("{}#{tag}{i}", self.id)),
                    title: c.title,
                    text: c.text,
                    lang: c.lang,
                })
                .collect()
        };
        let provenance = match (self.source_id.clone(), self.aug_lang) {
            (Some(source_id), Some(aug_lang)) => Some(Provenance { source_id, aug_lang }),
            (None, None) => None,
            _ => {
                return Err(Error::Validation(format!(
                    "example {:?}: source_id and aug_lang must appear together",
                    self.id
                )))
            }
        };
        let ex = QAExample {
            positives: ctxs(self.positive_ctxs, "pos"),
            negatives: ctxs(self.negative_ctxs, "neg"),
            question: Question {
                id: self.id,
                text: self.question,
                lang: self.lang,
            },
            answers: self.answers,
            provenance,
        };
        ex.validate()?;
        Ok(ex)
    }

    fn from_example(ex: &QAExample) -> Self {
        let ctxs = |list: &[Passage]| {
            list.iter()
                .map(|p| CtxRecord {
                    id: Some(p.id.clone()),
                    title: p.title.clone(),
                    text: p.text.clone(),
                    lang: p.lang,
                })
                .collect()
        };
        ExampleRecord {
            id: ex.question.id.clone(),
            question: ex.question.text.clone(),
            lang: ex.question.lang,
            answers: ex.answers.clone(),
            positive_ctxs: ctxs(&ex.positives),
            negative_ctxs: ctxs(&ex.negatives),
            source_id: ex.provenance.as_ref().map(|p| p.source_id.clone()),
            aug_lang: ex.provenance.as_ref().map(|p| p.aug_lang),
        }
    }
}

pub fn read_examples<R: BufRead>(reader: R) -> Result<Vec<QAExample>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(rec.into_example().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line_no}: {m}")),
            other => other,
        })?);
    }
    Ok(out)
}

pub fn read_example_file(path: impl AsRef<Path>) -> Result<Vec<QAExample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_examples(BufReader::new(file))
}

pub fn example_to_line(ex: &QAExample) -> String {
    serde_json::to_string(&ExampleRecord::from_example(ex)).expect("example records always serialize")
}

pub fn write_examples<W: Write>(mut w: W, examples: &[QAExample]) -> std::io::Result<()> {
    for ex in examples {
        w.write_all(example_to_line(ex).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_example_file(path: impl AsRef<Path>, examples: &[QAExample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_examples(BufWriter::new(file), examples).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ServiceError;
    use crate::translate::{IdentityTranslator, MappingTranslator};
    use std::collections::HashMap;

    fn para(id: &str, text: &str) -> Passage {
        Passage::new(id, "", text, LanguageCode::EN).unwrap()
    }

    fn example(id: &str, answer: &str, pos: &[&str], neg: &[&str]) -> QAExample {
        QAExample {
            question: Question::new(id, "What is the capital of France?", LanguageCode::EN).unwrap(),
            answers: vec![answer.to_string()],
            positives: pos.iter().enumerate().map(|(i, t)| para(&format!("{id}p{i}"), t)).collect(),
            negatives: neg.iter().enumerate().map(|(i, t)| para(&format!("{id}n{i}"), t)).collect(),
            provenance: None,
        }
    }

    fn words(n: usize, tag: &str) -> String {
        (0..n).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn identity_translation_changes_only_ids_and_lang() {
        let ex = example("e1", "Paris", &["The capital of France is Paris."], &["Lyon is big."]);
        let out = translate_example(&ex, LanguageCode::KO, &IdentityTranslator, &AugmentationConfig::default()).unwrap();
        assert_eq!(out.question.id, "e1#ko");
        assert_eq!(out.question.lang, LanguageCode::KO);
        assert_eq!(out.question.text, ex.question.text);
        assert_eq!(out.answers, ex.answers);
        assert_eq!(out.positives[0].text, ex.positives[0].text);
        assert_eq!(out.positives[0].id, "e1p0#ko");
        assert_eq!(out.negatives[0].lang, LanguageCode::KO);
        assert_eq!(
            out.provenance,
            Some(Provenance { source_id: "e1".into(), aug_lang: LanguageCode::KO })
        );
    }

    #[test]
    fn mapping_translation_applies_to_every_field() {
        let ex = QAExample {
            question: Question::new("e", "Where?", LanguageCode::EN).unwrap(),
            answers: vec!["Paris".into()],
            positives: vec![Passage::new("p", "France", "It is Paris.", LanguageCode::EN).unwrap()],
            negatives: vec![],
            provenance: None,
        };
        let tr = MappingTranslator::new(HashMap::from([
            ("Where?".to_string(), "어디?".to_string()),
            ("Paris".to_string(), "파리".to_string()),
            ("It is Paris.".to_string(), "파리입니다.".to_string()),
            ("France".to_string(), "프랑스".to_string()),
        ]));
        let out = translate_example(&ex, LanguageCode::KO, &tr, &AugmentationConfig::default()).unwrap();
        assert_eq!(out.question.text, "어디?");
        assert_eq!(out.answers, ["파리"]);
        assert_eq!(out.positives[0].text, "파리입니다.");
        assert_eq!(out.positives[0].title, "프랑스");
        assert!(filter_contains_answer(&out, ContainmentMode::Exact));
    }

    #[test]
    fn only_first_three_paragraphs_translated() {
        let texts: Vec<String> = (0..5).map(|i| format!("pos {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let ex = example("e", "pos", &refs, &refs);
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let tr = |t: &str, _: LanguageCode, _: LanguageCode| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok::<_, ServiceError>(t.to_owned())
        };
        let out = translate_example(&ex, LanguageCode::BN, &tr, &AugmentationConfig::default()).unwrap();
        assert_eq!(out.positives.len(), 3);
        assert_eq!(out.negatives.len(), 3);
        assert_eq!(out.positives[2].text, "pos 2");
        // question + answer + 3 positives + 3 negatives (titles empty)
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 8);
    }

    #[test]
    fn non_english_source_rejected() {
        let mut ex = example("e", "a", &["a"], &[]);
        ex.question.lang = LanguageCode::JA;
        assert!(translate_example(&ex, LanguageCode::KO, &IdentityTranslator, &AugmentationConfig::default()).is_err());
    }

    #[test]
    fn translation_failure_is_example_level() {
        let ex = example("e", "Paris", &["Paris"], &[]);
        let tr = |t: &str, _: LanguageCode, _: LanguageCode| {
            if t == "Paris" {
                Err(ServiceError::Transport("reset".into()))
            } else {
                Ok(t.to_owned())
            }
        };
        assert!(translate_example(&ex, LanguageCode::KO, &tr, &AugmentationConfig::default()).is_err());
    }

    #[test]
    fn containment_is_literal() {
        let ex = example("e", "Paris", &["…capital of France is Paris."], &[]);
        assert!(filter_contains_answer(&ex, ContainmentMode::Exact));
        let lower = example("e", "paris", &["…capital of France is Paris."], &[]);
        assert!(!filter_contains_answer(&lower, ContainmentMode::Exact));
        assert!(filter_contains_answer(&lower, ContainmentMode::NfkcCasefold));
        let none = example("e", "Paris", &[], &["Paris"]);
        assert!(!filter_contains_answer(&none, ContainmentMode::Exact));
        let wide = example("e", "Ｐａｒｉｓ", &["in Paris"], &[]);
        assert!(!filter_contains_answer(&wide, ContainmentMode::Exact));
        assert!(filter_contains_answer(&wide, ContainmentMode::NfkcCasefold));
    }

    #[test]
    fn three_passages_fit_in_budget() {
        let q = Question::new("q", words(30, "q"), LanguageCode::EN).unwrap();
        let ps: Vec<_> = (0..3).map(|i| para(&format!("p{i}"), &words(150, &format!("w{i}x")))).collect();
        let r = build_reader_input(&q, &ps, &[], 600).unwrap();
        assert_eq!(r.n_passages, 3);
        assert!(!r.truncated);
        // 30 + 3 * 150 + 2 separators.
        assert_eq!(count_tokens(&q.text) + count_tokens(&r.context), 482);
        assert_eq!(r.context.matches(" [SEP] ").count(), 2);
    }

    #[test]
    fn oversized_single_passage_truncated() {
        let q = Question::new("q", words(20, "q"), LanguageCode::EN).unwrap();
        let ps = vec![para("p", &words(1000, "w"))];
        let r = build_reader_input(&q, &ps, &["a".into()], 600).unwrap();
        assert!(r.truncated);
        assert_eq!(count_tokens(&r.context), 580);
        assert!(r.context.ends_with("w579"));
    }

    #[test]
    fn truncation_keeps_cjk_and_punctuation_consistent() {
        let q = Question::new("q", "서울은?", LanguageCode::KO).unwrap();
        let ps = vec![Passage::new("p", "서울", "서울특별시는 대한민국의 수도이다. 인구는 많다!", LanguageCode::KO).unwrap()];
        for budget in 4..20 {
            let r = build_reader_input(&q, &ps, &[], budget).unwrap();
            assert!(count_tokens(&q.text) + count_tokens(&r.context) <= budget);
        }
    }

    #[test]
    fn huge_budget_keeps_everything_in_order() {
        let q = Question::new("q", "q", LanguageCode::EN).unwrap();
        let ps = vec![
            Passage::new("a", "A", "first", LanguageCode::EN).unwrap(),
            para("b", "second"),
            para("c", "third"),
        ];
        let r = build_reader_input(&q, &ps, &[], 1_000_000).unwrap();
        assert_eq!(r.context, "A first [SEP] second [SEP] third");
    }

    #[test]
    fn reader_input_preconditions() {
        let q = Question::new("q", "one two three", LanguageCode::EN).unwrap();
        assert!(build_reader_input(&q, &[], &[], 600).is_err());
        assert!(build_reader_input(&q, &[para("p", "x")], &[], 3).is_err());
        assert_eq!(build_reader_input(&q, &[para("p", "x y")], &[], 4).unwrap().context, "x");
    }

    #[test]
    fn corpus_identity_keeps_all() {
        let src: Vec<_> = (0..4)
            .map(|i| example(&format!("e{i}"), "Paris", &["Paris is here"], &["no"]))
            .collect();
        let cfg = AugmentationConfig { target_langs: vec![LanguageCode::KO], ..Default::default() };
        let out = augment_corpus(&src, &cfg, &IdentityTranslator, FailurePolicy::Skip, 2).unwrap();
        assert_eq!(out.kept.len(), 4);
        assert_eq!(out.dropped, 0);
        assert_eq!(out.report.per_language[0].kept, 4);
        assert!(out.kept.iter().all(|e| filter_contains_answer(e, ContainmentMode::Exact)));
    }

    #[test]
    fn corpus_garbled_answers_drop_all() {
        let src: Vec<_> = (0..4)
            .map(|i| example(&format!("e{i}"), "Paris", &["Paris is here"], &[]))
            .collect();
        let garble = |t: &str, _: LanguageCode, _: LanguageCode| {
            Ok::<_, ServiceError>(if t == "Paris" { "Pariz".into() } else { t.to_owned() })
        };
        let cfg = AugmentationConfig::default();
        let out = augment_corpus(&src, &cfg, &garble, FailurePolicy::Skip, 1).unwrap();
        assert!(out.kept.is_empty());
        assert_eq!(out.dropped, 8);
    }

    #[test]
    fn corpus_selects_first_n_and_counts_errors() {
        let src: Vec<_> = (0..10)
            .map(|i| example(&format!("e{i}"), "Paris", &["Paris"], &[]))
            .collect();
        let cfg = AugmentationConfig { n_examples: 2, target_langs: vec![LanguageCode::KO, LanguageCode::BN], ..Default::default() };
        let failing_bn = |t: &str, _: LanguageCode, tgt: LanguageCode| {
            if tgt == LanguageCode::BN {
                Err(ServiceError::Status { status: 503, body: "busy".into() })
            } else {
                Ok(t.to_owned())
            }
        };
        let out = augment_corpus(&src, &cfg, &failing_bn, FailurePolicy::Skip, 4).unwrap();
        assert_eq!(out.report.selected, 2);
        let ids: Vec<_> = out.kept.iter().map(|e| e.question.id.as_str()).collect();
        assert_eq!(ids, ["e0#ko", "e1#ko"]);
        assert_eq!(out.errored, 2);
        assert_eq!(out.kept.len() + out.dropped + out.errored, 2 * 2);
        assert!(augment_corpus(&src, &cfg, &failing_bn, FailurePolicy::FailFast, 1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AugmentationConfig::default().validate().is_ok());
        assert!(AugmentationConfig { n_examples: 0, ..Default::default() }.validate().is_err());
        assert!(AugmentationConfig { target_langs: vec![], ..Default::default() }.validate().is_err());
        assert!(AugmentationConfig { target_langs: vec![LanguageCode::UND], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn example_file_round_trip() {
        let mut ex = example("e1", "Paris", &["Paris a"], &["b"]);
        ex.provenance = Some(Provenance { source_id: "s".into(), aug_lang: LanguageCode::KO });
        let mut buf = Vec::new();
        write_examples(&mut buf, &[ex.clone()]).unwrap();
        let back = read_examples(buf.as_slice()).unwrap();
        assert_eq!(back, vec![ex]);
    }

    #[test]
    fn example_file_defaults() {
        let line = r#"{"id":"x","question":"q?","lang":"en","answers":["a"],"positive_ctxs":[{"title":"t","text":"a b"}],"negative_ctxs":[]}"#;
        let ex = read_examples(line.as_bytes()).unwrap().remove(0);
        assert_eq!(ex.positives[0].id, "x#pos0");
        assert!(ex.provenance.is_none());
        let no_answers = r#"{"id":"x","question":"q?","lang":"en","answers":[]}"#;
        assert!(read_examples(no_answers.as_bytes()).is_err());
    }

    #[test]
    fn examples_from_runs_split_by_flag() {
        let q = Question::new("q", "who?", LanguageCode::EN).unwrap();
        let mut run = RetrievalRun::from_ranked(
            q.clone(),
            vec![(para("a", "x"), None, true), (para("b", "y"), None, false)],
        )
        .unwrap();
        let no_answer = run.clone();
        run.answers = vec!["x".into()];
        let mut other = no_answer.clone();
        other.question.id = "other".into();
        let (ex, skipped) = examples_from_runs(&[run, other]);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].positives[0].id, "a");
        assert_eq!(ex[0].negatives[0].id, "b");
        assert_eq!(skipped, ["other"]);
    }
}
