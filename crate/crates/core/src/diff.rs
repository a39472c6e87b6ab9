//! Prior-versus-final classification of re-annotated errors and the
//! macro-averaged change-rate tables built from it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotation::{ErrorAnnotation, ItemKey, SegmentAnnotation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangedField {
    Side,
    Start,
    End,
    Category,
    Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "fields", rename_all = "lowercase")]
pub enum Outcome {
    Deleted,
    Changed(Vec<ChangedField>),
    Kept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Stable error ids from the event log. Exact.
    #[default]
    Id,
    /// Greedy maximal character overlap. Heuristic, for imported data.
    Overlap,
}

impl MatchMode {
    pub fn is_heuristic(self) -> bool {
        matches!(self, MatchMode::Overlap)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorOutcome {
    pub prior_id: String,
    pub outcome: Outcome,
}

/// Outcome for every prior error of one re-annotated segment, plus the ids
/// of errors that only exist in the final state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRecord {
    pub mode: MatchMode,
    pub outcomes: Vec<PriorOutcome>,
    pub added: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiffCounts {
    pub prior: usize,
    pub deleted: usize,
    pub changed: usize,
    pub kept: usize,
    pub added: usize,
}

impl core::ops::AddAssign for DiffCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.prior += rhs.prior;
        self.deleted += rhs.deleted;
        self.changed += rhs.changed;
        self.kept += rhs.kept;
        self.added += rhs.added;
    }
}

impl DiffRecord {
    pub fn counts(&self) -> DiffCounts {
        let mut c = DiffCounts {
            prior: self.outcomes.len(),
            added: self.added.len(),
            ..DiffCounts::default()
        };
        for o in &self.outcomes {
            match o.outcome {
                Outcome::Deleted => c.deleted += 1,
                Outcome::Changed(_) => c.changed += 1,
                Outcome::Kept => c.kept += 1,
            }
        }
        c
    }

    /// Same record with outcomes limited to `ids` and no added errors.
    pub fn restricted_to(&self, ids: &BTreeSet<String>) -> DiffRecord {
        DiffRecord {
            mode: self.mode,
            outcomes: self
                .outcomes
                .iter()
                .filter(|o| ids.contains(&o.prior_id))
                .cloned()
                .collect(),
            added: Vec::new(),
        }
    }
}

fn changed_fields(prior: &ErrorAnnotation, fin: &ErrorAnnotation) -> Vec<ChangedField> {
    let mut fields = Vec::new();
    if prior.side != fin.side {
        fields.push(ChangedField::Side);
    }
    if prior.start != fin.start {
        fields.push(ChangedField::Start);
    }
    if prior.end != fin.end {
        fields.push(ChangedField::End);
    }
    if prior.category != fin.category {
        fields.push(ChangedField::Category);
    }
    if prior.severity != fin.severity {
        fields.push(ChangedField::Severity);
    }
    fields
}

fn outcome_for(prior: &ErrorAnnotation, fin: Option<&ErrorAnnotation>) -> Outcome {
    match fin {
        None => Outcome::Deleted,
        Some(fin) => {
            let fields = changed_fields(prior, fin);
            if fields.is_empty() {
                Outcome::Kept
            } else {
                Outcome::Changed(fields)
            }
        }
    }
}

/// Match prior and final errors by id. State comparison only: an error
/// edited back to its original state counts as kept.
pub fn classify_by_id(prior: &[ErrorAnnotation], fin: &[ErrorAnnotation]) -> DiffRecord {
    let final_by_id: BTreeMap<&str, &ErrorAnnotation> =
        fin.iter().map(|e| (e.id.as_str(), e)).collect();
    let prior_ids: BTreeSet<&str> = prior.iter().map(|e| e.id.as_str()).collect();
    DiffRecord {
        mode: MatchMode::Id,
        outcomes: prior
            .iter()
            .map(|p| PriorOutcome {
                prior_id: p.id.clone(),
                outcome: outcome_for(p, final_by_id.get(p.id.as_str()).copied()),
            })
            .collect(),
        added: fin
            .iter()
            .filter(|e| !prior_ids.contains(e.id.as_str()))
            .map(|e| e.id.clone())
            .collect(),
    }
}

/// Greedy one-to-one matching by largest character overlap on the same
/// side; ties go to the smaller prior start, then the smaller final start.
pub fn classify_by_overlap(prior: &[ErrorAnnotation], fin: &[ErrorAnnotation]) -> DiffRecord {
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (pi, p) in prior.iter().enumerate() {
        for (fi, f) in fin.iter().enumerate() {
            let overlap = p.overlap(f);
            if overlap > 0 {
                candidates.push((overlap, pi, fi));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(prior[a.1].start.cmp(&prior[b.1].start))
            .then(fin[a.2].start.cmp(&fin[b.2].start))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut prior_match: Vec<Option<usize>> = alloc::vec![None; prior.len()];
    let mut final_used = alloc::vec![false; fin.len()];
    for (_, pi, fi) in candidates {
        if prior_match[pi].is_none() && !final_used[fi] {
            prior_match[pi] = Some(fi);
            final_used[fi] = true;
        }
    }
    DiffRecord {
        mode: MatchMode::Overlap,
        outcomes: prior
            .iter()
            .zip(&prior_match)
            .map(|(p, m)| PriorOutcome {
                prior_id: p.id.clone(),
                outcome: outcome_for(p, m.map(|fi| &fin[fi])),
            })
            .collect(),
        added: fin
            .iter()
            .zip(&final_used)
            .filter(|(_, used)| !**used)
            .map(|(f, _)| f.id.clone())
            .collect(),
    }
}

pub fn classify(mode: MatchMode, prior: &[ErrorAnnotation], fin: &[ErrorAnnotation]) -> DiffRecord {
    match mode {
        MatchMode::Id => classify_by_id(prior, fin),
        MatchMode::Overlap => classify_by_overlap(prior, fin),
    }
}

/// Percentages of the prior-error count.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    pub deleted: f64,
    pub changed: f64,
    pub kept: f64,
    pub added: f64,
}

impl Rates {
    fn of(c: &DiffCounts) -> Rates {
        let base = c.prior as f64;
        Rates {
            deleted: 100.0 * c.deleted as f64 / base,
            changed: 100.0 * c.changed as f64 / base,
            kept: 100.0 * c.kept as f64 / base,
            added: 100.0 * c.added as f64 / base,
        }
    }

    pub fn retained_total(&self) -> f64 {
        self.deleted + self.changed + self.kept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterRates {
    pub rater: String,
    pub counts: DiffCounts,
    pub rates: Rates,
}

/// Per re-annotator counts and rates, and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub per_rater: Vec<RaterRates>,
    /// Re-annotators left out because they saw no prior errors.
    pub excluded: Vec<String>,
    #[serde(rename = "macro")]
    pub macro_rates: Rates,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

/// Pool each re-annotator's records, convert to percentages, then average
/// across re-annotators.
pub fn diff_summary<'a>(
    records: impl IntoIterator<Item = (&'a str, &'a DiffRecord)>,
) -> Result<DiffSummary> {
    let mut pooled: BTreeMap<&str, DiffCounts> = BTreeMap::new();
    for (rater, record) in records {
        *pooled.entry(rater).or_default() += record.counts();
    }
    summarize(pooled.into_iter().map(|(r, c)| (r.to_string(), c)))
}

pub(crate) fn summarize(pooled: impl IntoIterator<Item = (String, DiffCounts)>) -> Result<DiffSummary> {
    let mut per_rater = Vec::new();
    let mut excluded = Vec::new();
    for (rater, counts) in pooled {
        if counts.prior == 0 {
            excluded.push(rater);
        } else {
            per_rater.push(RaterRates {
                rates: Rates::of(&counts),
                rater,
                counts,
            });
        }
    }
    if per_rater.is_empty() {
        return Err(Error::NoPriorErrors);
    }
    let n = per_rater.len() as f64;
    let mut macro_rates = Rates::default();
    for r in &per_rater {
        macro_rates.deleted += r.rates.deleted;
        macro_rates.changed += r.rates.changed;
        macro_rates.kept += r.rates.kept;
        macro_rates.added += r.rates.added;
    }
    macro_rates.deleted /= n;
    macro_rates.changed /= n;
    macro_rates.kept /= n;
    macro_rates.added /= n;
    Ok(DiffSummary {
        per_rater,
        excluded,
        macro_rates,
    })
}

/// Ratio of the mean number of errors per human initial annotation to the
/// mean per automatic annotation, over items both sides annotated.
pub fn error_count_ratio(humans: &[SegmentAnnotation], autos: &[SegmentAnnotation]) -> Result<f64> {
    let auto_items: BTreeSet<ItemKey> = autos.iter().map(SegmentAnnotation::item).collect();
    let human_items: BTreeSet<ItemKey> = humans.iter().map(SegmentAnnotation::item).collect();
    let mean = |set: &[SegmentAnnotation], other: &BTreeSet<ItemKey>| -> Option<f64> {
        let (total, n) = set
            .iter()
            .filter(|a| other.contains(&a.item()))
            .fold((0usize, 0usize), |(t, n), a| (t + a.errors.len(), n + 1));
        (n > 0).then(|| total as f64 / n as f64)
    };
    let human_mean = mean(humans, &auto_items).ok_or(Error::EmptyInput("no shared items"))?;
    let auto_mean = mean(autos, &human_items).ok_or(Error::EmptyInput("no shared items"))?;
    if auto_mean == 0.0 {
        return Err(Error::NoAutoErrors);
    }
    Ok(human_mean / auto_mean)
}
