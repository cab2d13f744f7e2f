//! Retrieval and answer metrics: Positives@K, Recall@K, same/cross-language
//! MRR, token-level F1, per-language aggregation and gain rows.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{detect_language, LanguageCode};
use crate::model::RetrievalRun;
use crate::tokenize::tokenize;

pub const DEFAULT_KS: [usize; 2] = [5, 15];

/// Number of positives among the first `k` candidates in current order.
pub fn positives_at_k(run: &RetrievalRun, k: usize) -> usize {
    run.candidates.iter().take(k).filter(|c| c.is_positive).count()
}

/// Percentage of the run's total positives found in the first `k` candidates.
///
/// The denominator is `total_positives`, frozen from the original top-50; when
/// it was never frozen the current order is taken as the original one.
/// Returns `None` for runs without any positive, which are excluded from
/// aggregation.
pub fn recall_at_k(run: &RetrievalRun, k: usize) -> Option<f64> {
    let total = run.total_positives.unwrap_or_else(|| run.count_pool_positives());
    if total == 0 {
        return None;
    }
    Some(100.0 * positives_at_k(run, k) as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrrSubset {
    /// Positives in the question's language.
    Same,
    /// Positives in any other language.
    Cross,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrrMode {
    /// Reciprocal rank of the highest-ranked qualifying positive.
    #[default]
    First,
    /// Mean reciprocal rank over every qualifying positive.
    MeanAll,
}

impl FromStr for MrrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(MrrMode::First),
            "mean_all" => Ok(MrrMode::MeanAll),
            other => Err(Error::Validation(format!(
                "unknown MRR mode {other:?}; expected first or mean_all"
            ))),
        }
    }
}

/// Reciprocal rank of qualifying positives, 0 when none qualifies.
///
/// Positive passages must have a resolved language (see [`resolve_languages`]).
pub fn mrr(run: &RetrievalRun, subset: MrrSubset, mode: MrrMode) -> Result<f64> {
    let qlang = run.question.lang;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, c) in run.candidates.iter().enumerate() {
        if !c.is_positive {
            continue;
        }
        if subset != MrrSubset::All && c.passage.lang.is_und() {
            return Err(Error::Precondition(format!(
                "passage {:?} of question {:?} has no resolved language",
                c.passage.id, run.question.id
            )));
        }
        let qualifies = match subset {
            MrrSubset::Same => c.passage.lang == qlang,
            MrrSubset::Cross => c.passage.lang != qlang,
            MrrSubset::All => true,
        };
        if !qualifies {
            continue;
        }
        let rr = 1.0 / (i + 1) as f64;
        match mode {
            MrrMode::First => return Ok(rr),
            MrrMode::MeanAll => {
                sum += rr;
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Fill in `und` passage languages with [`detect_language`]. Returns the ids of
/// positive passages whose language still could not be determined.
pub fn resolve_languages(run: &mut RetrievalRun) -> Vec<String> {
    let mut unresolved = Vec::new();
    for c in &mut run.candidates {
        if c.passage.lang.is_und() {
            c.passage.lang = detect_language(&c.passage.text).unwrap_or(LanguageCode::UND);
            if c.passage.lang.is_und() && c.is_positive {
                unresolved.push(c.passage.id.clone());
            }
        }
    }
    unresolved
}

/// A predicted answer and its gold answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerPair {
    pub predicted: String,
    pub gold: Vec<String>,
}

impl AnswerPair {
    pub fn new(predicted: impl Into<String>, gold: Vec<String>) -> Result<Self> {
        if gold.is_empty() {
            return Err(Error::Validation("answer pair needs at least one gold answer".into()));
        }
        Ok(AnswerPair {
            predicted: predicted.into(),
            gold,
        })
    }

    pub fn f1(&self) -> f64 {
        token_f1(&self.predicted, &self.gold)
    }
}

fn f1_tokens(predicted: &[String], gold: &[String]) -> f64 {
    match (predicted.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in predicted {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / predicted.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-overlap F1 against the best-matching gold answer.
pub fn token_f1(predicted: &str, gold: &[String]) -> f64 {
    let p = tokenize(predicted).into_inner();
    gold.iter()
        .map(|g| f1_tokens(&p, &tokenize(g).into_inner()))
        .fold(0.0, f64::max)
}

/// One reportable quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    PositivesAt(usize),
    RecallAt(usize),
    MrrSame,
    MrrCross,
}

impl Metric {
    pub fn is_percent(&self) -> bool {
        matches!(self, Metric::RecallAt(_))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::PositivesAt(k) => write!(f, "P@{k}"),
            Metric::RecallAt(k) => write!(f, "R@{k}"),
            Metric::MrrSame => f.write_str("MRR-Same"),
            Metric::MrrCross => f.write_str("MRR-Cross"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("unknown metric {s:?}"));
        match s {
            "MRR-Same" => Ok(Metric::MrrSame),
            "MRR-Cross" => Ok(Metric::MrrCross),
            _ => {
                let (kind, k) = s.split_once('@').ok_or_else(bad)?;
                let k: usize = k.parse().map_err(|_| bad())?;
                match kind {
                    "P" => Ok(Metric::PositivesAt(k)),
                    "R" => Ok(Metric::RecallAt(k)),
                    _ => Err(bad()),
                }
            }
        }
    }
}

/// Metrics of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub lang: LanguageCode,
    pub positives_at: BTreeMap<usize, usize>,
    /// `None` when the run has no positives in its original top-50.
    pub recall_at: BTreeMap<usize, Option<f64>>,
    pub mrr_same: f64,
    pub mrr_cross: f64,
}

pub fn run_metrics(run: &RetrievalRun, ks: &[usize], mode: MrrMode) -> Result<RunMetrics> {
    if ks.contains(&0) {
        return Err(Error::Precondition("metric cutoffs must be at least 1".into()));
    }
    Ok(RunMetrics {
        lang: run.question.lang,
        positives_at: ks.iter().map(|&k| (k, positives_at_k(run, k))).collect(),
        recall_at: ks.iter().map(|&k| (k, recall_at_k(run, k))).collect(),
        mrr_same: mrr(run, MrrSubset::Same, mode)?,
        mrr_cross: mrr(run, MrrSubset::Cross, mode)?,
    })
}

/// Per-language means.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LanguageMetrics {
    pub positives_at: BTreeMap<usize, f64>,
    /// Percent.
    pub recall_at: BTreeMap<usize, f64>,
    pub mrr_same: f64,
    pub mrr_cross: f64,
    pub n_questions: usize,
    /// Questions entering the recall mean (those with at least one positive).
    pub n_recall: usize,
}

impl LanguageMetrics {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::PositivesAt(k) => self.positives_at.get(&k).copied(),
            Metric::RecallAt(k) => self.recall_at.get(&k).copied(),
            Metric::MrrSame => Some(self.mrr_same),
            Metric::MrrCross => Some(self.mrr_cross),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    /// Languages in order of first appearance.
    pub per_language: Vec<(LanguageCode, LanguageMetrics)>,
    /// Questions left out because a positive passage's language was unknown.
    pub excluded: Vec<String>,
}

impl MetricsReport {
    pub fn language(&self, lang: LanguageCode) -> Option<&LanguageMetrics> {
        self.per_language.iter().find(|(l, _)| *l == lang).map(|(_, m)| m)
    }

    pub fn metrics(&self) -> Vec<Metric> {
        let mut out: Vec<Metric> = self.ks.iter().map(|&k| Metric::PositivesAt(k)).collect();
        out.extend(self.ks.iter().map(|&k| Metric::RecallAt(k)));
        out.extend([Metric::MrrSame, Metric::MrrCross]);
        out
    }

    /// Every (language, metric) value of the report.
    pub fn row(&self) -> MetricRow {
        let mut row = MetricRow::new();
        for (lang, m) in &self.per_language {
            for metric in self.metrics() {
                if let Some(v) = m.get(metric) {
                    row.insert((*lang, metric), v);
                }
            }
        }
        row
    }

    /// Machine-readable form: one record per language per metric.
    pub fn records(&self, system: &str) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        for (lang, m) in &self.per_language {
            for metric in self.metrics() {
                let n = if metric.is_percent() { m.n_recall } else { m.n_questions };
                if let Some(value) = m.get(metric) {
                    out.push(MetricRecord {
                        system: system.to_owned(),
                        lang: *lang,
                        metric: metric.to_string(),
                        value,
                        n,
                    });
                }
            }
        }
        out
    }

    /// Rebuild reports from machine-readable records, grouped by system name in
    /// order of first appearance.
    pub fn from_records(records: &[MetricRecord]) -> Result<Vec<(String, MetricsReport)>> {
        let mut systems: Vec<(String, MetricsReport)> = Vec::new();
        for r in records {
            let idx = match systems.iter().position(|(s, _)| *s == r.system) {
                Some(i) => i,
                None => {
                    systems.push((r.system.clone(), MetricsReport::default()));
                    systems.len() - 1
                }
            };
            let report = &mut systems[idx].1;
            let metric: Metric = r.metric.parse()?;
            let lang_idx = match report.per_language.iter().position(|(l, _)| *l == r.lang) {
                Some(i) => i,
                None => {
                    report.per_language.push((r.lang, LanguageMetrics::default()));
                    report.per_language.len() - 1
                }
            };
            let m = &mut report.per_language[lang_idx].1;
            match metric {
                Metric::PositivesAt(k) => {
                    m.positives_at.insert(k, r.value);
                    m.n_questions = r.n;
                    if !report.ks.contains(&k) {
                        report.ks.push(k);
                    }
                }
                Metric::RecallAt(k) => {
                    m.recall_at.insert(k, r.value);
                    m.n_recall = r.n;
                    if !report.ks.contains(&k) {
                        report.ks.push(k);
                    }
                }
                Metric::MrrSame => {
                    m.mrr_same = r.value;
                    m.n_questions = r.n;
                }
                Metric::MrrCross => {
                    m.mrr_cross = r.value;
                    m.n_questions = r.n;
                }
            }
        }
        for (_, report) in &mut systems {
            report.ks.sort_unstable();
        }
        Ok(systems)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub system: String,
    pub lang: LanguageCode,
    pub metric: String,
    pub value: f64,
    /// Number of questions averaged.
    pub n: usize,
}

/// Per-language means of per-run metrics, folded in input order. Recall means
/// only count runs with a defined recall.
pub fn aggregate(runs: &[RunMetrics], ks: &[usize]) -> MetricsReport {
    #[derive(Default)]
    struct Acc {
        positives: BTreeMap<usize, f64>,
        recall: BTreeMap<usize, f64>,
        mrr_same: f64,
        mrr_cross: f64,
        n: usize,
        n_recall: usize,
    }
    let mut order: Vec<LanguageCode> = Vec::new();
    let mut accs: HashMap<LanguageCode, Acc> = HashMap::new();
    for r in runs {
        if !accs.contains_key(&r.lang) {
            order.push(r.lang);
        }
        let acc = accs.entry(r.lang).or_default();
        acc.n += 1;
        for &k in ks {
            *acc.positives.entry(k).or_default() += r.positives_at.get(&k).copied().unwrap_or(0) as f64;
        }
        let recall_defined = ks.iter().all(|k| matches!(r.recall_at.get(k), Some(Some(_))));
        if recall_defined {
            acc.n_recall += 1;
            for &k in ks {
                *acc.recall.entry(k).or_default() += r.recall_at[&k].expect("checked");
            }
        }
        acc.mrr_same += r.mrr_same;
        acc.mrr_cross += r.mrr_cross;
    }
    let per_language = order
        .into_iter()
        .map(|lang| {
            let acc = &accs[&lang];
            let n = acc.n as f64;
            let mean_recall = |k: usize| {
                if acc.n_recall == 0 {
                    0.0
                } else {
                    acc.recall.get(&k).copied().unwrap_or(0.0) / acc.n_recall as f64
                }
            };
            let m = LanguageMetrics {
                positives_at: ks.iter().map(|&k| (k, acc.positives.get(&k).copied().unwrap_or(0.0) / n)).collect(),
                recall_at: ks.iter().map(|&k| (k, mean_recall(k))).collect(),
                mrr_same: acc.mrr_same / n,
                mrr_cross: acc.mrr_cross / n,
                n_questions: acc.n,
                n_recall: acc.n_recall,
            };
            (lang, m)
        })
        .collect();
    MetricsReport {
        ks: ks.to_vec(),
        per_language,
        excluded: Vec::new(),
    }
}

/// Resolve passage languages, compute per-run metrics and aggregate. Runs with
/// a positive passage of unknown language are excluded and listed.
pub fn evaluate(runs: &[RetrievalRun], ks: &[usize], mode: MrrMode) -> Result<MetricsReport> {
    let mut per_run = Vec::with_capacity(runs.len());
    let mut excluded = Vec::new();
    for run in runs {
        let mut run = run.clone();
        let unresolved = resolve_languages(&mut run);
        if !unresolved.is_empty() {
            log::warn!(
                "excluding question {:?}: cannot determine language of {}",
                run.question.id,
                unresolved.join(", ")
            );
            excluded.push(run.question.id.clone());
            continue;
        }
        per_run.push(run_metrics(&run, ks, mode)?);
    }
    let mut report = aggregate(&per_run, ks);
    report.excluded = excluded;
    Ok(report)
}

/// Values keyed by language and metric.
pub type MetricRow = BTreeMap<(LanguageCode, Metric), f64>;

/// Element-wise `b - a`. Both rows must have the same keys.
pub fn gain(a: &MetricRow, b: &MetricRow) -> Result<MetricRow> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        let missing: Vec<String> = a
            .keys()
            .filter(|k| !b.contains_key(k))
            .chain(b.keys().filter(|k| !a.contains_key(k)))
            .map(|(l, m)| format!("{l} {m}"))
            .collect();
        return Err(Error::Validation(format!(
            "gain needs rows with identical languages and metrics; unmatched: {}",
            missing.join(", ")
        )));
    }
    Ok(a.iter().map(|(key, va)| (*key, b[key] - va)).collect())
}

/// Signed difference with one decimal, e.g. `+3.9`, `-4.5`; zero renders as `0.0`.
pub fn format_gain(v: f64) -> String {
    let s = format!("{v:+.1}");
    if s == "+0.0" || s == "-0.0" {
        "0.0".to_owned()
    } else {
        s
    }
}

/// Four significant digits with trailing zeros trimmed: `0.226`, `0.0006`.
pub fn format_decimal(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

/// Percent with one or two decimals: `12.1`, `8.02`, `29.0`.
pub fn format_percent(v: f64) -> String {
    let s = format!("{v:.2}");
    match s.strip_suffix('0') {
        Some(short) => short.to_owned(),
        None => s,
    }
}

fn format_value(metric: Metric, v: f64) -> String {
    if metric.is_percent() {
        format_percent(v)
    } else {
        format_decimal(v)
    }
}

/// Signed difference for the gain table. Recall gains use one decimal; the
/// small-valued positives and MRR differences keep four significant digits.
pub fn format_signed(metric: Metric, v: f64) -> String {
    if metric.is_percent() {
        format_gain(v)
    } else if v > 0.0 {
        format!("+{}", format_decimal(v))
    } else {
        format_decimal(v)
    }
}

struct Table {
    title: String,
    languages: Vec<LanguageCode>,
    columns: Vec<(String, Metric)>,
    rows: Vec<(String, Vec<String>)>,
}

impl Table {
    fn render(&self, out: &mut String) {
        if self.columns.is_empty() {
            return;
        }
        let label_w = self
            .rows
            .iter()
            .map(|(l, _)| l.chars().count())
            .max()
            .unwrap_or(0)
            .max(4);
        let ncol = self.columns.len();
        let mut widths: Vec<usize> = self.columns.iter().map(|(h, _)| h.len()).collect();
        for (_, cells) in &self.rows {
            for (lw, cell) in cells.chunks(ncol).flat_map(|c| c.iter().enumerate()) {
                widths[lw] = widths[lw].max(cell.chars().count());
            }
        }
        let group_w: usize = widths.iter().map(|w| w + 2).sum();

        out.push_str(&self.title);
        out.push('\n');
        let mut line = format!("{:label_w$}", "");
        for lang in &self.languages {
            line.push_str(&format!("  {:<w$}", lang.as_str(), w = group_w.saturating_sub(2)));
        }
        out.push_str(line.trim_end());
        out.push('\n');
        let mut line = format!("{:label_w$}", "");
        for _ in &self.languages {
            for ((h, _), w) in self.columns.iter().zip(&widths) {
                line.push_str(&format!("  {h:>w$}"));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
        for (label, cells) in &self.rows {
            let pad = label_w - label.chars().count();
            let mut line = format!("{label}{}", " ".repeat(pad));
            for (i, cell) in cells.iter().enumerate() {
                let w = widths[i % ncol];
                line.push_str(&format!("  {cell:>w$}"));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out.push('\n');
    }
}

/// Plain-text tables with languages as column groups and one row per system:
/// Positives@K, Recall@K (with a gain row when exactly two systems are given),
/// and same/cross-language MRR.
pub fn render_tables(systems: &[(String, MetricsReport)]) -> String {
    let mut languages: Vec<LanguageCode> = Vec::new();
    let mut ks: Vec<usize> = Vec::new();
    for (_, r) in systems {
        for (l, _) in &r.per_language {
            if !languages.contains(l) {
                languages.push(*l);
            }
        }
        for k in &r.ks {
            if !ks.contains(k) {
                ks.push(*k);
            }
        }
    }
    ks.sort_unstable();

    let cell = |r: &MetricsReport, lang: LanguageCode, m: Metric| {
        r.language(lang)
            .and_then(|lm| lm.get(m))
            .map(|v| format_value(m, v))
            .unwrap_or_else(|| "-".to_owned())
    };
    let table = |title: &str, columns: Vec<(String, Metric)>, with_gain: bool| {
        let mut rows: Vec<(String, Vec<String>)> = systems
            .iter()
            .map(|(name, r)| {
                let cells = languages
                    .iter()
                    .flat_map(|&l| columns.iter().map(move |(_, m)| (l, *m)))
                    .map(|(l, m)| cell(r, l, m))
                    .collect();
                (name.clone(), cells)
            })
            .collect();
        if with_gain && systems.len() == 2 {
            let (a, b) = (&systems[0].1, &systems[1].1);
            let cells = languages
                .iter()
                .flat_map(|&l| columns.iter().map(move |(_, m)| (l, *m)))
                .map(|(l, m)| {
                    match (
                        a.language(l).and_then(|x| x.get(m)),
                        b.language(l).and_then(|x| x.get(m)),
                    ) {
                        (Some(va), Some(vb)) => format_signed(m, vb - va),
                        _ => "-".to_owned(),
                    }
                })
                .collect();
            rows.push(("Gain".to_owned(), cells));
        }
        Table {
            title: title.to_owned(),
            languages: languages.clone(),
            columns,
            rows,
        }
    };

    let mut out = String::new();
    table(
        "Positives@K",
        ks.iter().map(|&k| (format!("P@{k}"), Metric::PositivesAt(k))).collect(),
        false,
    )
    .render(&mut out);
    table(
        "Recall@K (%)",
        ks.iter().map(|&k| (format!("R@{k}"), Metric::RecallAt(k))).collect(),
        true,
    )
    .render(&mut out);
    table(
        "MRR",
        vec![("Same".to_owned(), Metric::MrrSame), ("Cross".to_owned(), Metric::MrrCross)],
        false,
    )
    .render(&mut out);
    out
}

/// Plain-text gain table over every shared metric, `b - a`.
pub fn render_gain(a_name: &str, b_name: &str, row: &MetricRow) -> String {
    let mut out = format!("Gain: {b_name} - {a_name}\n");
    for ((lang, metric), v) in row {
        out.push_str(&format!("{lang}\t{metric}\t{}\n", format_signed(*metric, *v)));
    }
    out
}
