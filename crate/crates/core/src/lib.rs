//! Core of an MQM re-annotation toolkit.
//!
//! Everything in this crate is a pure function over immutable values and
//! only needs `alloc`: the error-span annotation model and its edit-event
//! replay, MQM penalty scoring, character-level F1 and pairwise ranking
//! agreement, prior/final diff classification, randomized campaign
//! planning, artificial-span injection for quality control, a seeded rater
//! simulator and the analysis tables built on top of those pieces.
//!
//! File formats, the task-serving backend, the automatic annotator gateway
//! and the command line live in the `mqm-reanno` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agreement;
pub mod analysis;
pub mod annotation;
pub mod category;
pub mod diff;
mod error;
pub mod id;
pub mod planner;
pub mod qc;
pub mod scoring;
pub mod simulate;

pub use agreement::{
    char_f1, char_f1_corpus, char_labeling, pra_corpus, pra_segment, Aggregation,
    AgreementReport, CharCounts, CharLabeling, SideSelection,
};
pub use annotation::{
    replay_events, validate_annotation, AnnotationKey, Corpus, EditEvent, EditKind,
    ErrorAnnotation, ItemKey, PriorSource, Segment, SegmentAnnotation, Setting, Severity, Side,
    Stage, Violation,
};
pub use category::{Category, CategoryRegistry};
pub use diff::{
    classify_by_id, classify_by_overlap, diff_summary, error_count_ratio, DiffCounts, DiffRecord,
    DiffSummary, MatchMode, Outcome,
};
pub use error::{Error, ReplayFault, Result};
pub use planner::{expected_counts, plan_campaign, validate_plan, CampaignConfig, CampaignPlan};
pub use scoring::{error_weight, segment_score, system_score, WeightScheme};
