//! Documents, translations, error-span annotations and edit events.
//!
//! Character offsets everywhere count Unicode scalar values (`char`s), never
//! bytes or UTF-16 units.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::category::{Category, CategoryRegistry};
use crate::error::{Error, ReplayFault, Result};

/// Ordered so that `Major > Minor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Minor,
    Major,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Minor => "Minor",
            Severity::Major => "Major",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

/// One marked error span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorAnnotation {
    pub id: String,
    pub side: Side,
    /// Inclusive start, in chars.
    pub start: usize,
    /// Exclusive end, in chars.
    pub end: usize,
    pub category: Category,
    pub severity: Severity,
    /// Set only on artificial quality-control spans.
    #[serde(default)]
    pub injected: bool,
}

impl ErrorAnnotation {
    pub fn new(
        id: impl Into<String>,
        side: Side,
        start: usize,
        end: usize,
        category: Category,
        severity: Severity,
    ) -> Self {
        Self {
            id: id.into(),
            side,
            start,
            end,
            category,
            severity,
            injected: false,
        }
    }

    /// Number of characters shared with `other` (0 when on different sides).
    pub fn overlap(&self, other: &ErrorAnnotation) -> usize {
        if self.side != other.side {
            return 0;
        }
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }

    /// Equality of everything a rater can edit (span, category, severity).
    pub fn same_content(&self, other: &ErrorAnnotation) -> bool {
        self.side == other.side
            && self.start == other.start
            && self.end == other.end
            && self.category == other.category
            && self.severity == other.severity
    }
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// One source segment and every system's translation of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub doc_id: String,
    pub segment_index: usize,
    pub source_text: String,
    pub targets: BTreeMap<String, String>,
}

impl Segment {
    pub fn text(&self, side: Side, system_id: &str) -> Option<&str> {
        match side {
            Side::Source => Some(&self.source_text),
            Side::Target => self.targets.get(system_id).map(String::as_str),
        }
    }

    pub fn text_len(&self, side: Side, system_id: &str) -> Option<usize> {
        self.text(side, system_id).map(char_len)
    }
}

/// A validated list of segments: per document, indices run 0..n without gaps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    segments: Vec<Segment>,
    index: BTreeMap<(String, usize), usize>,
    doc_order: Vec<String>,
}

impl Corpus {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut doc_order: Vec<String> = Vec::new();
        let mut per_doc: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for (pos, seg) in segments.iter().enumerate() {
            if index
                .insert((seg.doc_id.clone(), seg.segment_index), pos)
                .is_some()
            {
                return Err(Error::DuplicateKey(format!(
                    "{}:{}",
                    seg.doc_id, seg.segment_index
                )));
            }
            if !per_doc.contains_key(seg.doc_id.as_str()) {
                doc_order.push(seg.doc_id.clone());
            }
            per_doc
                .entry(seg.doc_id.as_str())
                .or_default()
                .insert(seg.segment_index);
        }
        for (doc, indices) in &per_doc {
            // contiguous from zero <=> max index == count - 1
            if indices.iter().next_back().copied() != Some(indices.len() - 1) {
                return Err(Error::InvalidCorpus(format!(
                    "segment indices of document `{doc}` are not contiguous from 0"
                )));
            }
        }
        Ok(Self {
            segments,
            index,
            doc_order,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<Segment> {
        self.segments
    }

    pub fn segment(&self, doc_id: &str, segment_index: usize) -> Option<&Segment> {
        self.index
            .get(&(doc_id.to_string(), segment_index))
            .map(|&pos| &self.segments[pos])
    }

    /// Document ids in order of first appearance.
    pub fn documents(&self) -> &[String] {
        &self.doc_order
    }

    pub fn document_segments<'a>(&'a self, doc_id: &'a str) -> impl Iterator<Item = &'a Segment> {
        self.segments.iter().filter(move |s| s.doc_id == doc_id)
    }

    pub fn segment_count(&self, doc_id: &str) -> usize {
        self.document_segments(doc_id).count()
    }

    /// Union of system ids over all segments, sorted.
    pub fn systems(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.segments.iter().flat_map(|s| s.targets.keys()).collect();
        set.into_iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    ReAnnotation,
}

/// Who produced the prior errors a re-annotation started from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriorSource {
    Human { rater: String },
    Auto { system: String },
}

impl PriorSource {
    pub fn id(&self) -> &str {
        match self {
            PriorSource::Human { rater } => rater,
            PriorSource::Auto { system } => system,
        }
    }
}

/// Annotation setting by prior source: none, same rater, other human, or
/// automatic system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "self")]
    SelfReview,
    #[serde(rename = "other")]
    Other,
    #[serde(rename = "auto")]
    Auto,
}

impl Setting {
    pub const REANNOTATION: [Setting; 3] = [Setting::SelfReview, Setting::Other, Setting::Auto];

    pub fn label(self) -> &'static str {
        match self {
            Setting::Single => "Single",
            Setting::SelfReview => "Self",
            Setting::Other => "Other",
            Setting::Auto => "Auto",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Everything one rater marked on one system's translation of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub doc_id: String,
    pub segment_index: usize,
    pub system_id: String,
    pub rater_id: String,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_source: Option<PriorSource>,
    pub errors: Vec<ErrorAnnotation>,
    #[serde(default)]
    pub active_seconds: f64,
}

impl SegmentAnnotation {
    pub fn initial(item: &ItemKey, rater_id: &str, errors: Vec<ErrorAnnotation>) -> Self {
        Self {
            doc_id: item.doc_id.clone(),
            segment_index: item.segment_index,
            system_id: item.system_id.clone(),
            rater_id: rater_id.to_string(),
            stage: Stage::Initial,
            prior_source: None,
            errors,
            active_seconds: 0.0,
        }
    }

    pub fn key(&self) -> AnnotationKey {
        AnnotationKey {
            doc_id: self.doc_id.clone(),
            segment_index: self.segment_index,
            system_id: self.system_id.clone(),
            rater_id: self.rater_id.clone(),
            stage: self.stage,
            prior_source: self.prior_source.clone(),
        }
    }

    pub fn item(&self) -> ItemKey {
        ItemKey {
            doc_id: self.doc_id.clone(),
            segment_index: self.segment_index,
            system_id: self.system_id.clone(),
        }
    }

    /// Self/Other/Auto from provenance; `None` for initial annotations.
    pub fn reannotation_setting(&self) -> Option<Setting> {
        match (&self.stage, &self.prior_source) {
            (Stage::ReAnnotation, Some(PriorSource::Human { rater })) if *rater == self.rater_id => {
                Some(Setting::SelfReview)
            }
            (Stage::ReAnnotation, Some(PriorSource::Human { .. })) => Some(Setting::Other),
            (Stage::ReAnnotation, Some(PriorSource::Auto { .. })) => Some(Setting::Auto),
            _ => None,
        }
    }
}

/// Identity of a stored annotation; two annotations with the same key are a
/// duplicate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnnotationKey {
    pub doc_id: String,
    pub segment_index: usize,
    pub system_id: String,
    pub rater_id: String,
    pub stage: Stage,
    pub prior_source: Option<PriorSource>,
}

impl fmt::Display for AnnotationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}:{:?}",
            self.doc_id, self.segment_index, self.system_id, self.rater_id, self.stage
        )?;
        if let Some(prior) = &self.prior_source {
            write!(f, "<{}", prior.id())?;
        }
        Ok(())
    }
}

/// One system translation of one segment: the unit agreement is measured on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemKey {
    pub doc_id: String,
    pub segment_index: usize,
    pub system_id: String,
}

impl ItemKey {
    pub fn new(doc_id: &str, segment_index: usize, system_id: &str) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            segment_index,
            system_id: system_id.to_string(),
        }
    }
}

impl fmt::Display for ItemKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.doc_id, self.segment_index, self.system_id)
    }
}

/// A broken invariant of a [`SegmentAnnotation`], named after the field.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum Violation {
    SystemMissing { system_id: String },
    SegmentMismatch { doc_id: String, segment_index: usize },
    SpanOutOfBounds { error_id: String, side: Side, end: usize, len: usize },
    EmptySpan { error_id: String, start: usize, end: usize },
    DuplicateErrorId { error_id: String },
    ProvenanceMismatch { stage: Stage },
    UnknownCategory { error_id: String, category: String },
    InvalidActiveSeconds { value: f64 },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::SystemMissing { .. } => "system-missing",
            Violation::SegmentMismatch { .. } => "segment-mismatch",
            Violation::SpanOutOfBounds { .. } => "span-out-of-bounds",
            Violation::EmptySpan { .. } => "empty-span",
            Violation::DuplicateErrorId { .. } => "duplicate-error-id",
            Violation::ProvenanceMismatch { .. } => "provenance-mismatch",
            Violation::UnknownCategory { .. } => "unknown-category",
            Violation::InvalidActiveSeconds { .. } => "invalid-active-seconds",
        }
    }

    pub fn field(&self) -> &'static str {
        match self {
            Violation::SystemMissing { .. } => "system_id",
            Violation::SegmentMismatch { .. } => "segment_index",
            Violation::SpanOutOfBounds { .. } => "errors.end",
            Violation::EmptySpan { .. } => "errors.start",
            Violation::DuplicateErrorId { .. } => "errors.id",
            Violation::ProvenanceMismatch { .. } => "prior_source",
            Violation::UnknownCategory { .. } => "errors.category",
            Violation::InvalidActiveSeconds { .. } => "active_seconds",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.code(), self.field())?;
        match self {
            Violation::SpanOutOfBounds {
                error_id, end, len, ..
            } => write!(f, ": error `{error_id}` ends at {end} but text has {len} chars"),
            Violation::EmptySpan {
                error_id,
                start,
                end,
            } => write!(f, ": error `{error_id}` has span [{start},{end})"),
            Violation::DuplicateErrorId { error_id } => write!(f, ": `{error_id}`"),
            Violation::UnknownCategory { error_id, category } => {
                write!(f, ": error `{error_id}` uses `{category}`")
            }
            Violation::SystemMissing { system_id } => write!(f, ": `{system_id}`"),
            _ => Ok(()),
        }
    }
}

/// Check `annotation` against its segment text and the category registry.
/// Returns every violated invariant; an empty list means valid.
pub fn validate_annotation(
    annotation: &SegmentAnnotation,
    segment: &Segment,
    registry: &CategoryRegistry,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if annotation.doc_id != segment.doc_id || annotation.segment_index != segment.segment_index {
        out.push(Violation::SegmentMismatch {
            doc_id: annotation.doc_id.clone(),
            segment_index: annotation.segment_index,
        });
    }
    let target_len = segment.text_len(Side::Target, &annotation.system_id);
    if target_len.is_none() {
        out.push(Violation::SystemMissing {
            system_id: annotation.system_id.clone(),
        });
    }
    match (annotation.stage, &annotation.prior_source) {
        (Stage::Initial, None) | (Stage::ReAnnotation, Some(_)) => {}
        (stage, _) => out.push(Violation::ProvenanceMismatch { stage }),
    }
    if !(annotation.active_seconds.is_finite() && annotation.active_seconds >= 0.0) {
        out.push(Violation::InvalidActiveSeconds {
            value: annotation.active_seconds,
        });
    }
    let source_len = char_len(&segment.source_text);
    let mut seen = BTreeSet::new();
    for error in &annotation.errors {
        if !seen.insert(error.id.as_str()) {
            out.push(Violation::DuplicateErrorId {
                error_id: error.id.clone(),
            });
        }
        if error.start >= error.end {
            out.push(Violation::EmptySpan {
                error_id: error.id.clone(),
                start: error.start,
                end: error.end,
            });
        }
        let len = match error.side {
            Side::Source => Some(source_len),
            Side::Target => target_len,
        };
        if let Some(len) = len {
            if error.end > len {
                out.push(Violation::SpanOutOfBounds {
                    error_id: error.id.clone(),
                    side: error.side,
                    end: error.end,
                    len,
                });
            }
        }
        if !registry.contains(&error.category) {
            out.push(Violation::UnknownCategory {
                error_id: error.id.clone(),
                category: error.category.to_string(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Add,
    Modify,
    Delete,
}

/// One rater action on one error of a task. `payload` is the full error state
/// after the event and is absent for deletes.
///
/// Tasks cover a whole document, so the event names the segment it edits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditEvent {
    pub task_id: String,
    pub segment_index: usize,
    pub timestamp: u64,
    pub kind: EditKind,
    pub error_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<ErrorAnnotation>,
}

/// Apply `event` to `errors` in place: deletes remove, modifies replace in
/// position, adds append.
pub fn apply_event(
    errors: &mut Vec<ErrorAnnotation>,
    event: &EditEvent,
) -> core::result::Result<(), ReplayFault> {
    let position = errors.iter().position(|e| e.id == event.error_id);
    match event.kind {
        EditKind::Delete => {
            let pos = position.ok_or(ReplayFault::UnknownErrorId)?;
            errors.remove(pos);
        }
        EditKind::Modify => {
            let pos = position.ok_or(ReplayFault::UnknownErrorId)?;
            let payload = event.payload.as_ref().ok_or(ReplayFault::MissingPayload)?;
            if payload.id != event.error_id {
                return Err(ReplayFault::PayloadIdMismatch);
            }
            errors[pos] = payload.clone();
        }
        EditKind::Add => {
            if position.is_some() {
                return Err(ReplayFault::DuplicateErrorId);
            }
            let payload = event.payload.as_ref().ok_or(ReplayFault::MissingPayload)?;
            if payload.id != event.error_id {
                return Err(ReplayFault::PayloadIdMismatch);
            }
            errors.push(payload.clone());
        }
    }
    Ok(())
}

/// Replay an event stream over the prior error set of one segment.
pub fn replay_events<'a>(
    prior: &[ErrorAnnotation],
    events: impl IntoIterator<Item = &'a EditEvent>,
) -> Result<Vec<ErrorAnnotation>> {
    let mut errors = prior.to_vec();
    let mut last_timestamp = 0;
    for (index, event) in events.into_iter().enumerate() {
        let fault = if event.timestamp < last_timestamp {
            Err(ReplayFault::OutOfOrder)
        } else {
            apply_event(&mut errors, event)
        };
        fault.map_err(|fault| Error::Replay {
            index,
            error_id: event.error_id.clone(),
            fault,
        })?;
        last_timestamp = event.timestamp;
    }
    Ok(errors)
}
