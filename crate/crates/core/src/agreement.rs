//! Span agreement (character-level F1 with half credit for severity
//! disagreement) and score agreement (Group-by-Item pairwise ranking
//! agreement).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::annotation::{Corpus, ItemKey, Segment, SegmentAnnotation, Severity, Side};
use crate::error::{Error, Result};
use crate::scoring::{segment_score, WeightScheme};

/// Which sides contribute character positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideSelection {
    #[default]
    Target,
    /// Source and target positions, kept distinct.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Pool counts over all items, then compute F1.
    #[default]
    Micro,
    /// Average per-item F1.
    Macro,
}

/// Per-character marks of one annotation: `None` = unmarked, otherwise the
/// highest severity of any span covering the character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharLabeling {
    sides: SideSelection,
    target: Vec<Option<Severity>>,
    source: Vec<Option<Severity>>,
}

impl CharLabeling {
    pub fn sides(&self) -> SideSelection {
        self.sides
    }

    pub fn target(&self) -> &[Option<Severity>] {
        &self.target
    }

    /// Empty unless the labeling was built with [`SideSelection::Both`].
    pub fn source(&self) -> &[Option<Severity>] {
        &self.source
    }

    pub fn marked(&self) -> usize {
        self.positions().filter(|p| p.is_some()).count()
    }

    fn positions(&self) -> impl Iterator<Item = &Option<Severity>> {
        self.source.iter().chain(self.target.iter())
    }
}

/// Label every character of the analyzed side(s). Spans are clipped to the
/// text, overlapping spans resolve to the maximum severity.
pub fn char_labeling(
    annotation: &SegmentAnnotation,
    segment: &Segment,
    sides: SideSelection,
) -> CharLabeling {
    let target_len = segment
        .text_len(Side::Target, &annotation.system_id)
        .unwrap_or(0);
    let source_len = match sides {
        SideSelection::Target => 0,
        SideSelection::Both => segment.text_len(Side::Source, "").unwrap_or(0),
    };
    let mut target = alloc::vec![None; target_len];
    let mut source = alloc::vec![None; source_len];
    for error in &annotation.errors {
        let marks = match error.side {
            Side::Target => &mut target,
            Side::Source => &mut source,
        };
        let end = error.end.min(marks.len());
        for mark in marks.iter_mut().take(end).skip(error.start) {
            *mark = (*mark).max(Some(error.severity));
        }
    }
    CharLabeling {
        sides,
        target,
        source,
    }
}

/// Raw F1 counts; `tp` is a multiple of 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CharCounts {
    pub tp: f64,
    pub a_marked: usize,
    pub b_marked: usize,
}

impl CharCounts {
    /// Harmonic mean of precision `tp/a` and recall `tp/b`. Two empty
    /// labelings agree perfectly; exactly one empty side scores 0.
    pub fn f1(&self) -> f64 {
        match (self.a_marked, self.b_marked) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => 0.0,
            (a, b) => {
                let precision = self.tp / a as f64;
                let recall = self.tp / b as f64;
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            }
        }
    }

    fn add(self, other: CharCounts) -> CharCounts {
        CharCounts {
            tp: self.tp + other.tp,
            a_marked: self.a_marked + other.a_marked,
            b_marked: self.b_marked + other.b_marked,
        }
    }
}

pub fn char_f1(a: &CharLabeling, b: &CharLabeling) -> Result<CharCounts> {
    if a.sides != b.sides {
        return Err(Error::LabelingMismatch("different side selections"));
    }
    if a.target.len() != b.target.len() || a.source.len() != b.source.len() {
        return Err(Error::LabelingMismatch("different text lengths"));
    }
    let mut counts = CharCounts::default();
    for (x, y) in a.positions().zip(b.positions()) {
        counts.a_marked += usize::from(x.is_some());
        counts.b_marked += usize::from(y.is_some());
        if let (Some(x), Some(y)) = (x, y) {
            counts.tp += if x == y { 1.0 } else { 0.5 };
        }
    }
    Ok(counts)
}

/// Corpus-level character F1 under both aggregations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusF1 {
    pub micro: f64,
    pub macro_: f64,
    pub pooled: CharCounts,
    pub items: usize,
}

impl CorpusF1 {
    pub fn get(&self, aggregation: Aggregation) -> f64 {
        match aggregation {
            Aggregation::Micro => self.micro,
            Aggregation::Macro => self.macro_,
        }
    }
}

fn key_mismatch<K: ToString + Ord, A, B>(
    left: &BTreeMap<K, A>,
    right: &BTreeMap<K, B>,
) -> Option<Error> {
    let missing_right: Vec<String> = left
        .keys()
        .filter(|k| !right.contains_key(k))
        .map(ToString::to_string)
        .collect();
    let missing_left: Vec<String> = right
        .keys()
        .filter(|k| !left.contains_key(k))
        .map(ToString::to_string)
        .collect();
    if missing_left.is_empty() && missing_right.is_empty() {
        None
    } else {
        Some(Error::KeyMismatch {
            missing_left,
            missing_right,
        })
    }
}

pub fn char_f1_summary(
    set_a: &BTreeMap<ItemKey, CharLabeling>,
    set_b: &BTreeMap<ItemKey, CharLabeling>,
) -> Result<CorpusF1> {
    if let Some(err) = key_mismatch(set_a, set_b) {
        return Err(err);
    }
    if set_a.is_empty() {
        return Err(Error::EmptyInput("character F1 over zero items"));
    }
    let mut pooled = CharCounts::default();
    let mut f1_sum = 0.0;
    for (key, a) in set_a {
        let counts = char_f1(a, &set_b[key])?;
        pooled = pooled.add(counts);
        f1_sum += counts.f1();
    }
    Ok(CorpusF1 {
        micro: pooled.f1(),
        macro_: f1_sum / set_a.len() as f64,
        pooled,
        items: set_a.len(),
    })
}

pub fn char_f1_corpus(
    set_a: &BTreeMap<ItemKey, CharLabeling>,
    set_b: &BTreeMap<ItemKey, CharLabeling>,
    aggregation: Aggregation,
) -> Result<f64> {
    char_f1_summary(set_a, set_b).map(|s| s.get(aggregation))
}

fn relation(x: f64, y: f64) -> Ordering {
    // exact comparison; -0.0 == 0.0 on purpose
    x.partial_cmp(&y).unwrap_or(Ordering::Equal)
}

/// Fraction of unordered system pairs on which both score maps give the
/// same three-way relation (better / equal / worse).
pub fn pra_segment(
    scores1: &BTreeMap<String, f64>,
    scores2: &BTreeMap<String, f64>,
) -> Result<f64> {
    if scores1.keys().ne(scores2.keys()) {
        return Err(Error::SystemMismatch(format!(
            "{:?} vs {:?}",
            scores1.keys().collect::<Vec<_>>(),
            scores2.keys().collect::<Vec<_>>()
        )));
    }
    if scores1.len() < 2 {
        return Err(Error::TooFewSystems(scores1.len()));
    }
    let first: Vec<f64> = scores1.values().copied().collect();
    let second: Vec<f64> = scores2.values().copied().collect();
    let mut agree = 0usize;
    let mut pairs = 0usize;
    for i in 0..first.len() {
        for j in (i + 1)..first.len() {
            pairs += 1;
            if relation(first[i], first[j]) == relation(second[i], second[j]) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PraSummary {
    pub pra: f64,
    pub segments: usize,
    pub pairs: usize,
}

type SegmentScores = BTreeMap<(String, usize), BTreeMap<String, f64>>;

fn scores_by_segment(set: &[SegmentAnnotation], scheme: &WeightScheme) -> Result<SegmentScores> {
    let mut out: SegmentScores = BTreeMap::new();
    for a in set {
        let slot = out.entry((a.doc_id.clone(), a.segment_index)).or_default();
        if slot
            .insert(a.system_id.clone(), segment_score(a, scheme))
            .is_some()
        {
            return Err(Error::DuplicateKey(a.item().to_string()));
        }
    }
    Ok(out)
}

/// Group-by-Item PRA: per shared source segment over all its systems, then
/// averaged over segments.
pub fn pra_corpus(
    set_a: &[SegmentAnnotation],
    set_b: &[SegmentAnnotation],
    scheme: &WeightScheme,
) -> Result<PraSummary> {
    let a = scores_by_segment(set_a, scheme)?;
    let b = scores_by_segment(set_b, scheme)?;
    let mut total = 0.0;
    let mut segments = 0usize;
    let mut pairs = 0usize;
    for (key, scores_a) in &a {
        let Some(scores_b) = b.get(key) else { continue };
        let pra = pra_segment(scores_a, scores_b).map_err(|e| match e {
            Error::SystemMismatch(detail) => {
                Error::SystemMismatch(format!("segment {}:{} ({detail})", key.0, key.1))
            }
            other => other,
        })?;
        total += pra;
        segments += 1;
        let n = scores_a.len();
        pairs += n * (n - 1) / 2;
    }
    if segments == 0 {
        return Err(Error::EmptyInput("no shared segments for pairwise ranking"));
    }
    Ok(PraSummary {
        pra: total / segments as f64,
        segments,
        pairs,
    })
}

/// Agreement between two annotation settings over the same items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub left: String,
    pub right: String,
    pub sides: SideSelection,
    pub aggregation: Aggregation,
    /// Character F1 under `aggregation`.
    pub char_f1: f64,
    pub char_f1_micro: f64,
    pub char_f1_macro: f64,
    pub pra: f64,
    pub items: usize,
    pub segments: usize,
    pub pairs: usize,
    pub tp: f64,
    pub left_marked: usize,
    pub right_marked: usize,
}

fn index_items(set: &[SegmentAnnotation]) -> Result<BTreeMap<ItemKey, &SegmentAnnotation>> {
    let mut out = BTreeMap::new();
    for a in set {
        if out.insert(a.item(), a).is_some() {
            return Err(Error::DuplicateKey(a.item().to_string()));
        }
    }
    Ok(out)
}

pub struct AgreementOptions<'a> {
    pub corpus: &'a Corpus,
    pub weights: &'a WeightScheme,
    pub sides: SideSelection,
    pub aggregation: Aggregation,
}

/// Character F1 and PRA between two annotation sets that cover exactly the
/// same items (one annotation per item on each side).
pub fn agreement_report(
    left_label: &str,
    right_label: &str,
    left: &[SegmentAnnotation],
    right: &[SegmentAnnotation],
    options: &AgreementOptions<'_>,
) -> Result<AgreementReport> {
    let left_items = index_items(left)?;
    let right_items = index_items(right)?;
    if let Some(err) = key_mismatch(&left_items, &right_items) {
        return Err(err);
    }
    let mut la = BTreeMap::new();
    let mut lb = BTreeMap::new();
    for (key, a) in &left_items {
        let segment = options
            .corpus
            .segment(&key.doc_id, key.segment_index)
            .ok_or_else(|| Error::UnknownSegment(key.to_string()))?;
        la.insert(key.clone(), char_labeling(a, segment, options.sides));
        lb.insert(
            key.clone(),
            char_labeling(right_items[key], segment, options.sides),
        );
    }
    let f1 = char_f1_summary(&la, &lb)?;
    let pra = pra_corpus(left, right, options.weights)?;
    Ok(AgreementReport {
        left: left_label.to_string(),
        right: right_label.to_string(),
        sides: options.sides,
        aggregation: options.aggregation,
        char_f1: f1.get(options.aggregation),
        char_f1_micro: f1.micro,
        char_f1_macro: f1.macro_,
        pra: pra.pra,
        items: f1.items,
        segments: pra.segments,
        pairs: pra.pairs,
        tp: f1.pooled.tp,
        left_marked: f1.pooled.a_marked,
        right_marked: f1.pooled.b_marked,
    })
}

/// Systems present in `set`, used to check coverage before PRA.
pub fn systems_of(set: &[SegmentAnnotation]) -> BTreeSet<&str> {
    set.iter().map(|a| a.system_id.as_str()).collect()
}
