//! The `xlrank` command line: `search`, `rerank`, `evaluate`, `augment`.
//!
//! Exit codes: 0 success, 1 an output failed its post-write check, 2 bad input
//! or configuration, 3 external service failure.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::augmentation::{
    augment_corpus, build_reader_input, examples_from_runs, read_example_file, write_example_file,
    ContainmentMode, ReaderRecord,
};
use crate::config::{EndpointSection, PipelineConfig};
use crate::error::{Error, Result};
use crate::lang::{detect_language, LanguageCode};
use crate::likelihood::ReferenceScorer;
use crate::metrics::{evaluate, gain, render_gain, render_tables, MetricRecord, MetricsReport, MrrMode};
use crate::model::{Passage, Question, RetrievalRun};
use crate::reranker::{ExperimentMode, FailurePolicy, Reranker, Scorer};
use crate::retrieval::{load_matrix, top_k_with_workers};
use crate::runfile::{parse_run_file, write_run_file};
use crate::service::{HttpScorer, HttpTranslator};
use crate::translate::{IdentityTranslator, MappingTranslator, Translator};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SERVICE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "xlrank", version, about = "Cross-lingual retrieval, re-ranking, evaluation and augmentation")]
pub struct Cli {
    /// TOML pipeline config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: number of processors).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// What to do when one question or example fails: fail_fast or skip.
    #[arg(long, global = true)]
    pub policy: Option<FailurePolicy>,
    /// Directory for output files (default: out).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact top-k inner-product search over a passage embedding matrix.
    Search(SearchArgs),
    /// Re-rank a run file by question likelihood.
    Rerank(RerankArgs),
    /// Compute Positives@K, Recall@K and MRR per language.
    Evaluate(EvaluateArgs),
    /// Translate English QA examples and keep those whose answer survives.
    Augment(AugmentArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Passage embedding matrix (binary or text).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Question embedding matrix; row ids are question ids.
    #[arg(long)]
    pub queries: PathBuf,
    /// Passage JSONL: {"id", "title", "text", "lang"}.
    #[arg(long)]
    pub passages: Option<PathBuf>,
    /// Question JSONL: {"id", "question", "lang", "positive_ids", "answers"}.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    /// Run file to re-rank.
    #[arg(long)]
    pub input: PathBuf,
    /// direct_prompt, passage_translated, question_translated or language_tagged.
    #[arg(long)]
    pub mode: Option<ExperimentMode>,
    /// Candidates scored per question.
    #[arg(long)]
    pub k: Option<usize>,
    /// "builtin" or the base URL of a scoring service.
    #[arg(long, env = "XLRANK_SCORER_URL")]
    pub scorer: Option<String>,
    /// "identity", a JSON mapping file, or the base URL of a translation service.
    #[arg(long)]
    pub translator: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run file; give twice to compare a baseline (first) with a system (second).
    #[arg(long = "run", num_args = 1, required_unless_present = "records")]
    pub runs: Vec<PathBuf>,
    /// Display names for the runs, in the same order (default: file stems).
    #[arg(long = "name")]
    pub names: Vec<String>,
    /// Original run used to freeze recall denominators missing from the inputs.
    #[arg(long)]
    pub original: Option<PathBuf>,
    /// Re-render previously written metrics.jsonl instead of reading runs.
    #[arg(long, conflicts_with_all = ["runs", "original"])]
    pub records: Option<PathBuf>,
    /// Metric cutoffs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// first or mean_all.
    #[arg(long)]
    pub mrr_mode: Option<MrrMode>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// English QA-example JSONL, or a run file with --from-runs.
    #[arg(long)]
    pub input: PathBuf,
    /// Read the input as a run file carrying answers.
    #[arg(long)]
    pub from_runs: bool,
    /// Target languages, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub target_langs: Option<Vec<LanguageCode>>,
    #[arg(long)]
    pub n_examples: Option<usize>,
    /// exact or nfkc_casefold.
    #[arg(long)]
    pub containment: Option<ContainmentMode>,
    /// "identity", a JSON mapping file, or the base URL of a translation service.
    #[arg(long)]
    pub translator: Option<String>,
    /// Also write reader inputs for the kept examples.
    #[arg(long)]
    pub reader_inputs: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Run(#[from] Error),
    #[error("output check failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(e) if e.is_service() => EXIT_SERVICE,
            CliError::Run(_) => EXIT_INPUT,
            CliError::Verify(_) => EXIT_VERIFY,
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
/// Messages go to stdout/stderr.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("xlrank: {e}");
            e.exit_code()
        }
    }
}

/// Settings after merging config file and flags.
#[derive(Debug)]
struct Context {
    config: PipelineConfig,
    workers: usize,
    output: PathBuf,
}

impl Context {
    fn out(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    if let Some(p) = cli.policy {
        config.policy = p;
    }
    if let Some(o) = cli.output {
        config.output = Some(o);
    }
    match &cli.command {
        Command::Rerank(a) => {
            if let Some(m) = a.mode {
                config.rerank.mode = m;
            }
            if let Some(k) = a.k {
                config.rerank.k = k;
            }
        }
        Command::Evaluate(a) => {
            if let Some(ks) = &a.ks {
                config.evaluate.ks = ks.clone();
            }
            if let Some(m) = a.mrr_mode {
                config.evaluate.mrr_mode = m;
            }
        }
        Command::Augment(a) => {
            if let Some(l) = &a.target_langs {
                config.augment.target_langs = l.clone();
            }
            if let Some(n) = a.n_examples {
                config.augment.n_examples = n;
            }
            if let Some(c) = a.containment {
                config.augment.containment = c;
            }
        }
        Command::Search(_) => {}
    }
    config.validate()?;
    let workers = config.workers.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    let output = config.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context {
        config,
        workers,
        output,
    };
    match cli.command {
        Command::Search(a) => cmd_search(&ctx, &a),
        Command::Rerank(a) => cmd_rerank(&ctx, &a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, &a),
        Command::Augment(a) => cmd_augment(&ctx, &a),
    }
}

fn create_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("records always serialize"));
        text.push('\n');
    }
    write_text(path, &text)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct PassageLine {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
    #[serde(default)]
    lang: Option<LanguageCode>,
}

#[derive(Debug, Deserialize)]
struct QuestionLine {
    id: String,
    question: String,
    #[serde(default)]
    lang: Option<LanguageCode>,
    #[serde(default)]
    positive_ids: Vec<String>,
    #[serde(default)]
    answers: Vec<String>,
}

/// Writes `search.jsonl`: the top `k` passages per query row, by inner product.
fn cmd_search(ctx: &Context, args: &SearchArgs) -> Result<(), CliError> {
    if args.k == 0 {
        return Err(Error::Validation("k must be at least 1".into()).into());
    }
    let passages = load_matrix(&args.embeddings)?;
    let queries = load_matrix(&args.queries)?;
    if passages.dim() != queries.dim() {
        return Err(Error::Validation(format!(
            "query dimension {} does not match passage dimension {}",
            queries.dim(),
            passages.dim()
        ))
        .into());
    }
    let texts: HashMap<String, PassageLine> = match &args.passages {
        Some(p) => read_jsonl::<PassageLine>(p)?.into_iter().map(|l| (l.id.clone(), l)).collect(),
        None => HashMap::new(),
    };
    let questions: HashMap<String, QuestionLine> = match &args.questions {
        Some(p) => read_jsonl::<QuestionLine>(p)?.into_iter().map(|l| (l.id.clone(), l)).collect(),
        None => HashMap::new(),
    };
    let mut runs = Vec::with_capacity(queries.len());
    for (qid, vector) in queries.rows() {
        let hits = top_k_with_workers(vector, &passages, args.k, ctx.workers)?;
        let q = questions.get(qid);
        let text = q.map_or(qid, |q| q.question.as_str());
        let lang = match q.and_then(|q| q.lang) {
            Some(l) => l,
            None => detect_language(text).unwrap_or(LanguageCode::UND),
        };
        let question = Question::new(qid, text, lang)?;
        let candidates = hits
            .entries
            .iter()
            .map(|(pid, score)| {
                let passage = match texts.get(pid) {
                    Some(p) => Passage {
                        id: pid.clone(),
                        title: p.title.clone(),
                        text: p.text.clone(),
                        lang: p.lang.unwrap_or(LanguageCode::UND),
                    },
                    None => Passage {
                        id: pid.clone(),
                        title: String::new(),
                        text: pid.clone(),
                        lang: LanguageCode::UND,
                    },
                };
                let positive = q.is_some_and(|q| q.positive_ids.contains(pid));
                (passage, Some(*score), positive)
            })
            .collect();
        let mut run = RetrievalRun::from_ranked(question, candidates)?;
        run.answers = q.map(|q| q.answers.clone()).unwrap_or_default();
        run.freeze_total_positives();
        runs.push(run);
    }
    create_output_dir(&ctx.output)?;
    let path = ctx.out("search.jsonl");
    write_run_file(&path, &runs)?;
    let back = parse_run_file(&path)?;
    if back.len() != runs.len() {
        return Err(CliError::Verify(format!("{} holds {} runs, expected {}", path.display(), back.len(), runs.len())));
    }
    println!("wrote {} ({} questions, k={})", path.display(), runs.len(), args.k);
    Ok(())
}

enum TranslatorChoice {
    Identity,
    Mapping(PathBuf),
    Url(String),
}

fn translator_choice(flag: Option<&str>, config: &PipelineConfig) -> TranslatorChoice {
    match flag {
        Some("identity") => TranslatorChoice::Identity,
        Some(v) if v.starts_with("http://") || v.starts_with("https://") => TranslatorChoice::Url(v.to_owned()),
        Some(v) => TranslatorChoice::Mapping(PathBuf::from(v)),
        None => match (&config.translator.mapping_file, &config.translator.url) {
            (Some(m), _) => TranslatorChoice::Mapping(m.clone()),
            (None, Some(u)) => TranslatorChoice::Url(u.clone()),
            (None, None) => TranslatorChoice::Identity,
        },
    }
}

fn build_translator(flag: Option<&str>, config: &PipelineConfig) -> Result<Box<dyn Translator>> {
    Ok(match translator_choice(flag, config) {
        TranslatorChoice::Identity => Box::new(IdentityTranslator),
        TranslatorChoice::Mapping(p) => Box::new(MappingTranslator::from_file(p)?),
        TranslatorChoice::Url(u) => {
            let endpoint = config.translator.endpoint_section().endpoint(&u);
            let t = HttpTranslator::new(endpoint)?;
            t.health()?;
            Box::new(t)
        }
    })
}

fn build_scorer(flag: Option<&str>, section: &EndpointSection) -> Result<Box<dyn Scorer>> {
    let url = match flag {
        Some("builtin") => None,
        Some(u) => Some(u.to_owned()),
        None => section.url.clone(),
    };
    Ok(match url {
        None => Box::new(ReferenceScorer),
        Some(u) => {
            let s = HttpScorer::new(section.endpoint(&u))?;
            s.health()?;
            Box::new(s)
        }
    })
}

/// Writes `reranked.jsonl`, `rerank_report.jsonl` and `rerank_errors.jsonl`.
/// Under fail_fast nothing is written when any question fails.
fn cmd_rerank(ctx: &Context, args: &RerankArgs) -> Result<(), CliError> {
    let config = &ctx.config;
    let runs = parse_run_file(&args.input)?;
    let scorer = build_scorer(args.scorer.as_deref(), &config.scorer)?;
    let translator = build_translator(args.translator.as_deref(), config)?;
    let mode = config.rerank.mode;
    let reranker = Reranker::new(scorer.as_ref(), translator.as_ref(), mode)
        .depth(config.rerank.k)
        .workers(ctx.workers);
    let outcome = reranker.rerank_corpus(&runs, config.policy)?;
    if !runs.is_empty() && outcome.reranked.is_empty() && outcome.errors.iter().any(|e| e.service) {
        return Err(Error::Service(crate::error::ServiceError::Other(format!(
            "all {} questions failed; first: {}",
            runs.len(),
            outcome.errors[0].error
        )))
        .into());
    }
    let reranked: Vec<RetrievalRun> = outcome.reranked.iter().map(|r| r.run.clone()).collect();
    let records: Vec<_> = outcome.reranked.iter().map(|r| r.record(mode)).collect();

    create_output_dir(&ctx.output)?;
    let path = ctx.out("reranked.jsonl");
    write_run_file(&path, &reranked)?;
    write_jsonl(&ctx.out("rerank_report.jsonl"), &records)?;
    write_jsonl(&ctx.out("rerank_errors.jsonl"), &outcome.errors)?;

    let back = parse_run_file(&path)?;
    for (written, expected) in back.iter().zip(&reranked) {
        let ids = |r: &RetrievalRun| r.candidates.iter().map(|c| c.passage.id.clone()).collect::<Vec<_>>();
        if ids(written) != ids(expected) || written.total_positives != expected.total_positives {
            return Err(CliError::Verify(format!("question {:?} did not round-trip", expected.question.id)));
        }
    }
    if back.len() != reranked.len() {
        return Err(CliError::Verify(format!("{} is truncated", path.display())));
    }
    println!(
        "wrote {} ({} questions re-ranked, {} skipped, mode {mode})",
        path.display(),
        reranked.len(),
        outcome.errors.len()
    );
    Ok(())
}

fn system_names(paths: &[PathBuf], names: &[String]) -> Result<Vec<String>> {
    if !names.is_empty() && names.len() != paths.len() {
        return Err(Error::Validation(format!("{} names given for {} runs", names.len(), paths.len())));
    }
    let mut out: Vec<String> = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        let mut name = match names.get(i) {
            Some(n) => n.clone(),
            None => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("run{}", i + 1)),
        };
        if out.contains(&name) {
            name = format!("{name}#{}", i + 1);
        }
        out.push(name);
    }
    Ok(out)
}

fn check_ranges(system: &str, report: &MetricsReport) -> Result<(), CliError> {
    for (lang, m) in &report.per_language {
        let bad = m.positives_at.iter().any(|(k, v)| !(0.0..=*k as f64).contains(v))
            || m.recall_at.values().any(|v| !(0.0..=100.0).contains(v))
            || !(0.0..=1.0).contains(&m.mrr_same)
            || !(0.0..=1.0).contains(&m.mrr_cross);
        if bad {
            return Err(CliError::Verify(format!("{system}/{lang}: metric outside its range")));
        }
    }
    Ok(())
}

/// Writes `metrics.jsonl`, `metrics.txt`, and `gain.txt` when two systems are compared.
fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<(), CliError> {
    let config = &ctx.config;
    let systems: Vec<(String, MetricsReport)> = if let Some(records) = &args.records {
        let records: Vec<MetricRecord> = read_jsonl(records)?;
        MetricsReport::from_records(&records)?
    } else {
        if args.runs.len() > 2 {
            return Err(Error::Validation("evaluate takes one or two run files".into()).into());
        }
        let names = system_names(&args.runs, &args.names)?;
        let frozen: Option<HashMap<String, usize>> = match &args.original {
            Some(p) => Some(
                parse_run_file(p)?
                    .iter()
                    .map(|r| (r.question.id.clone(), r.total_positives.unwrap_or_else(|| r.count_pool_positives())))
                    .collect(),
            ),
            None => None,
        };
        let mut systems = Vec::new();
        for (name, path) in names.into_iter().zip(&args.runs) {
            let mut runs = parse_run_file(path)?;
            if let Some(frozen) = &frozen {
                for run in runs.iter_mut().filter(|r| r.total_positives.is_none()) {
                    run.total_positives = frozen.get(&run.question.id).copied();
                }
            }
            let report = evaluate(&runs, &config.evaluate.ks, config.evaluate.mrr_mode)?;
            if !report.excluded.is_empty() {
                eprintln!(
                    "{name}: excluded {} question(s) with unresolvable passage language",
                    report.excluded.len()
                );
            }
            systems.push((name, report));
        }
        systems
    };
    for (name, report) in &systems {
        check_ranges(name, report)?;
    }

    let mut table = render_tables(&systems);
    for (name, report) in &systems {
        if !report.excluded.is_empty() {
            table.push_str(&format!(
                "{name}: excluded {} question(s): {}\n",
                report.excluded.len(),
                report.excluded.join(", ")
            ));
        }
    }
    let records: Vec<MetricRecord> = systems.iter().flat_map(|(n, r)| r.records(n)).collect();

    create_output_dir(&ctx.output)?;
    write_jsonl(&ctx.out("metrics.jsonl"), &records)?;
    write_text(&ctx.out("metrics.txt"), &table)?;
    if let [(a_name, a), (b_name, b)] = systems.as_slice() {
        let diff = gain(&a.row(), &b.row())?;
        write_text(&ctx.out("gain.txt"), &render_gain(a_name, b_name, &diff))?;
    }
    print!("{table}");
    Ok(())
}

/// Writes `augmented.jsonl`, `augment_summary.json`, and with
/// `--reader-inputs` also `reader_inputs.jsonl`.
fn cmd_augment(ctx: &Context, args: &AugmentArgs) -> Result<(), CliError> {
    let config = &ctx.config;
    let source = if args.from_runs {
        let (examples, skipped) = examples_from_runs(&parse_run_file(&args.input)?);
        if !skipped.is_empty() {
            log::warn!("{} run(s) without answers ignored", skipped.len());
        }
        examples
    } else {
        read_example_file(&args.input)?
    };
    let translator = build_translator(args.translator.as_deref(), config)?;
    let outcome = augment_corpus(&source, &config.augment, translator.as_ref(), config.policy, ctx.workers)?;

    let mut reader = Vec::new();
    if args.reader_inputs {
        for ex in &outcome.kept {
            let passages: Vec<Passage> = ex.positives.iter().chain(&ex.negatives).cloned().collect();
            match build_reader_input(&ex.question, &passages, &ex.answers, config.augment.max_input_tokens) {
                Ok(r) => reader.push(r),
                Err(e) if config.policy == FailurePolicy::Skip => {
                    log::warn!("no reader input for {:?}: {e}", ex.question.id);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    create_output_dir(&ctx.output)?;
    let path = ctx.out("augmented.jsonl");
    write_example_file(&path, &outcome.kept)?;
    let summary = serde_json::to_string_pretty(&outcome.report).expect("report always serializes");
    write_text(&ctx.out("augment_summary.json"), &(summary + "\n"))?;
    if args.reader_inputs {
        write_jsonl::<ReaderRecord>(&ctx.out("reader_inputs.jsonl"), &reader)?;
    }
    if read_example_file(&path)? != outcome.kept {
        return Err(CliError::Verify(format!("{} did not round-trip", path.display())));
    }
    for s in &outcome.report.per_language {
        println!("{}: kept {}, dropped {}, errored {}", s.lang, s.kept, s.dropped, s.errored);
    }
    println!("wrote {} ({} examples)", path.display(), outcome.kept.len());
    Ok(())
}
