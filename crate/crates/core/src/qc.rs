//! Quality control by artificial error spans.
//!
//! One document is chosen for control. For every segment and system
//! translation of it a random one- or two-token span is injected as a Major
//! error, avoiding every character any of the document's human raters
//! marked. The injected spans are merged with the real spans of the rater
//! who marked the most errors on the document, and that union is what
//! re-annotators see as prior errors. How often re-annotators keep the
//! artificial spans measures over-trust in prior annotations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{
    Corpus, ErrorAnnotation, ItemKey, Segment, SegmentAnnotation, Setting, Severity, Side, Stage,
};
use crate::category::{Category, CategoryRegistry};
use crate::diff::{median, summarize, DiffCounts, DiffRecord, DiffSummary};
use crate::error::{Error, Result};
use crate::id::{keyed_rng, opaque_id};
use crate::planner::{DocumentAssignment, PlannedTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenizer {
    /// Whitespace-separated runs.
    Whitespace,
    /// Every non-whitespace character.
    Character,
    /// Whitespace runs, with each CJK character split out on its own.
    #[default]
    Auto,
}

impl Tokenizer {
    pub fn id(self) -> &'static str {
        match self {
            Tokenizer::Whitespace => "whitespace",
            Tokenizer::Character => "character",
            Tokenizer::Auto => "auto",
        }
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3000..=0x30FF       // CJK punctuation, kana
        | 0x3400..=0x4DBF     // extension A
        | 0x4E00..=0x9FFF     // unified ideographs
        | 0xF900..=0xFAFF     // compatibility ideographs
        | 0xFF00..=0xFFEF     // full-width forms
        | 0x20000..=0x2FA1F)
}

/// Token spans in char offsets, `[start, end)`.
pub fn tokenize(text: &str, tokenizer: Tokenizer) -> Vec<(usize, usize)> {
    let mut tokens = Vec::new();
    let mut run: Option<usize> = None;
    let mut last = 0;
    for (i, c) in text.chars().enumerate() {
        last = i + 1;
        let split_alone = match tokenizer {
            Tokenizer::Whitespace => false,
            Tokenizer::Character => true,
            Tokenizer::Auto => is_cjk(c),
        };
        if c.is_whitespace() || split_alone {
            if let Some(start) = run.take() {
                tokens.push((start, i));
            }
            if !c.is_whitespace() {
                tokens.push((i, i + 1));
            }
        } else if run.is_none() {
            run = Some(i);
        }
    }
    if let Some(start) = run {
        tokens.push((start, last));
    }
    tokens
}

/// Every window of `width` consecutive tokens that shares no character with
/// `blocked`.
pub fn eligible_windows(
    tokens: &[(usize, usize)],
    width: usize,
    blocked: &[(usize, usize)],
) -> Vec<(usize, usize)> {
    if width == 0 || tokens.len() < width {
        return Vec::new();
    }
    tokens
        .windows(width)
        .map(|w| (w[0].0, w[width - 1].1))
        .filter(|&(s, e)| blocked.iter().all(|&(bs, be)| e <= bs || be <= s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub doc_id: String,
    pub seed: u64,
    #[serde(default)]
    pub tokenizer: Tokenizer,
    /// Sampling set for the random category; registry leaves when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<Category>>,
}

impl InjectionConfig {
    pub fn new(doc_id: &str, seed: u64) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            seed,
            tokenizer: Tokenizer::default(),
            categories: None,
        }
    }

    pub fn category_pool(&self, registry: &CategoryRegistry) -> Vec<Category> {
        match &self.categories {
            Some(c) => c.iter().filter(|c| !c.is_non_translation()).cloned().collect(),
            None => registry.leaves(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    MissingTranslation,
    EmptyTarget,
    NoEligibleWindow,
    NoCategories,
}

pub fn error_totals<'a>(
    annotations: impl IntoIterator<Item = &'a SegmentAnnotation>,
) -> BTreeMap<String, usize> {
    let mut totals = BTreeMap::new();
    for a in annotations {
        *totals.entry(a.rater_id.clone()).or_insert(0) += a.errors.len();
    }
    totals
}

/// Rater with the most errors; ties go to the lexicographically smallest id.
pub fn select_densest_rater(totals: &BTreeMap<String, usize>) -> Result<String> {
    let mut best: Option<(&String, usize)> = None;
    for (rater, &count) in totals {
        if best.is_none_or(|(_, b)| count > b) {
            best = Some((rater, count));
        }
    }
    best.map(|(r, _)| r.clone()).ok_or(Error::NoAnnotations)
}

/// Draw one artificial span for one system translation of `segment`.
///
/// The width (one or two tokens) is drawn first; if no window of that width
/// is free of human-marked characters the other width is tried before
/// giving up.
pub fn inject_span(
    segment: &Segment,
    system_id: &str,
    human_initial: &[&SegmentAnnotation],
    cfg: &InjectionConfig,
    categories: &[Category],
) -> core::result::Result<ErrorAnnotation, SkipReason> {
    let text = segment
        .text(Side::Target, system_id)
        .ok_or(SkipReason::MissingTranslation)?;
    if text.is_empty() {
        return Err(SkipReason::EmptyTarget);
    }
    if categories.is_empty() {
        return Err(SkipReason::NoCategories);
    }
    let index = segment.segment_index.to_string();
    let seed = cfg.seed.to_string();
    let key = [segment.doc_id.as_str(), index.as_str(), system_id];
    let mut rng = keyed_rng(cfg.seed, &key);

    let blocked: Vec<(usize, usize)> = human_initial
        .iter()
        .flat_map(|a| a.errors.iter())
        .filter(|e| e.side == Side::Target)
        .map(|e| (e.start, e.end))
        .collect();
    let tokens = tokenize(text, cfg.tokenizer);
    let first = if rng.gen_bool(0.5) { 1 } else { 2 };
    let mut windows = eligible_windows(&tokens, first, &blocked);
    if windows.is_empty() {
        windows = eligible_windows(&tokens, 3 - first, &blocked);
    }
    let &(start, end) = windows.choose(&mut rng).ok_or(SkipReason::NoEligibleWindow)?;
    let category = categories.choose(&mut rng).expect("nonempty").clone();
    let mut error = ErrorAnnotation::new(
        opaque_id(&["injected", key[0], key[1], key[2], &seed]),
        Side::Target,
        start,
        end,
        category,
        Severity::Major,
    );
    error.injected = true;
    Ok(error)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum InjectionResult {
    Injected {
        error_id: String,
        start: usize,
        end: usize,
        tokens: usize,
        category: Category,
    },
    Skipped {
        reason: SkipReason,
    },
}

/// One record per segment × system of the control document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionLogEntry {
    pub doc_id: String,
    pub segment_index: usize,
    pub system_id: String,
    pub tokenizer: String,
    #[serde(flatten)]
    pub result: InjectionResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionOutcome {
    pub densest_rater: String,
    pub prior: Vec<SegmentAnnotation>,
    pub log: Vec<InjectionLogEntry>,
}

impl InjectionOutcome {
    pub fn injected_ids(&self) -> BTreeSet<String> {
        injected_ids(&self.prior)
    }
}

pub fn injected_ids(prior: &[SegmentAnnotation]) -> BTreeSet<String> {
    prior
        .iter()
        .flat_map(|a| a.errors.iter())
        .filter(|e| e.injected)
        .map(|e| e.id.clone())
        .collect()
}

/// Union of the densest rater's real spans and the injected spans, one
/// prior annotation per listed item.
pub fn build_qc_prior(
    densest_rater: &str,
    densest: &[&SegmentAnnotation],
    injected: &BTreeMap<ItemKey, ErrorAnnotation>,
    items: &[ItemKey],
) -> Vec<SegmentAnnotation> {
    items
        .iter()
        .map(|item| {
            let mut errors: Vec<ErrorAnnotation> = densest
                .iter()
                .filter(|a| a.item() == *item)
                .flat_map(|a| a.errors.iter().cloned())
                .map(|mut e| {
                    e.injected = false;
                    e
                })
                .collect();
            errors.extend(injected.get(item).cloned());
            SegmentAnnotation::initial(item, densest_rater, errors)
        })
        .collect()
}

/// Run the full injection protocol for `cfg.doc_id`.
///
/// `annotations` may contain anything; only initial annotations of the
/// document by its assigned human raters are used.
pub fn inject_document(
    corpus: &Corpus,
    assignment: &DocumentAssignment,
    systems: &[String],
    annotations: &[SegmentAnnotation],
    cfg: &InjectionConfig,
    registry: &CategoryRegistry,
) -> Result<InjectionOutcome> {
    if assignment.doc_id != cfg.doc_id {
        return Err(Error::InfeasibleConfig(format!(
            "assignment is for `{}`, injection targets `{}`",
            assignment.doc_id, cfg.doc_id
        )));
    }
    if corpus.segment_count(&cfg.doc_id) == 0 {
        return Err(Error::UnknownSegment(cfg.doc_id.clone()));
    }
    let humans: BTreeSet<&str> = assignment.raters.iter().map(String::as_str).collect();
    let initial: Vec<&SegmentAnnotation> = annotations
        .iter()
        .filter(|a| {
            a.doc_id == cfg.doc_id
                && a.stage == Stage::Initial
                && humans.contains(a.rater_id.as_str())
        })
        .collect();
    let densest_rater = select_densest_rater(&error_totals(initial.iter().copied()))?;
    let categories = cfg.category_pool(registry);

    let mut injected = BTreeMap::new();
    let mut log = Vec::new();
    let mut items = Vec::new();
    for segment in corpus.document_segments(&cfg.doc_id) {
        for system in systems {
            let item = ItemKey::new(&cfg.doc_id, segment.segment_index, system);
            let here: Vec<&SegmentAnnotation> = initial
                .iter()
                .copied()
                .filter(|a| a.item() == item)
                .collect();
            let result = match inject_span(segment, system, &here, cfg, &categories) {
                Ok(error) => {
                    let tokens = tokenize(
                        &segment.targets[system]
                            .chars()
                            .skip(error.start)
                            .take(error.end - error.start)
                            .collect::<String>(),
                        cfg.tokenizer,
                    )
                    .len();
                    let entry = InjectionResult::Injected {
                        error_id: error.id.clone(),
                        start: error.start,
                        end: error.end,
                        tokens,
                        category: error.category.clone(),
                    };
                    injected.insert(item.clone(), error);
                    entry
                }
                Err(reason) => InjectionResult::Skipped { reason },
            };
            log.push(InjectionLogEntry {
                doc_id: cfg.doc_id.clone(),
                segment_index: segment.segment_index,
                system_id: system.clone(),
                tokenizer: cfg.tokenizer.id().to_string(),
                result,
            });
            items.push(item);
        }
    }
    let densest: Vec<&SegmentAnnotation> = initial
        .iter()
        .copied()
        .filter(|a| a.rater_id == densest_rater)
        .collect();
    let prior = build_qc_prior(&densest_rater, &densest, &injected, &items);
    Ok(InjectionOutcome {
        densest_rater,
        prior,
        log,
    })
}

/// On the control document every rater re-annotates the control prior once
/// per system, through their Self or Other task; Auto tasks there are
/// retired and never served.
pub fn is_retired_qc_task(task: &PlannedTask, qc_doc: Option<&str>) -> bool {
    qc_doc == Some(task.doc_id.as_str()) && task.setting == Setting::Auto
}

/// What re-annotators did with artificial spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    /// Per-rater and macro Deleted/Changed/Kept; Added is always 0 here.
    pub summary: DiffSummary,
    pub kept_median: f64,
    pub kept_max: f64,
    pub kept_max_rater: String,
}

pub fn qc_report<'a>(
    records: impl IntoIterator<Item = (&'a str, &'a DiffRecord)>,
    injected: &BTreeSet<String>,
) -> Result<QcReport> {
    let mut pooled: BTreeMap<&str, DiffCounts> = BTreeMap::new();
    for (rater, record) in records {
        *pooled.entry(rater).or_default() += record.restricted_to(injected).counts();
    }
    let summary = summarize(pooled.into_iter().map(|(r, c)| (r.to_string(), c)))
        .map_err(|_| Error::NoInjectedErrors)?;
    let mut kept: Vec<f64> = summary.per_rater.iter().map(|r| r.rates.kept).collect();
    let (kept_max_rater, kept_max) = summary
        .per_rater
        .iter()
        .fold((String::new(), f64::NEG_INFINITY), |(br, bk), r| {
            if r.rates.kept > bk {
                (r.rater.clone(), r.rates.kept)
            } else {
                (br, bk)
            }
        });
    Ok(QcReport {
        kept_median: median(&mut kept).expect("nonempty summary"),
        kept_max,
        kept_max_rater,
        summary,
    })
}
