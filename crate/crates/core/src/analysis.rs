//! Analysis tables over an exported annotation snapshot.
//!
//! Settings are derived from provenance alone. Excluded documents (the
//! quality-control document) never reach any table here; `qc_analysis` is
//! the one place that reads them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agreement::{agreement_report, AgreementOptions, AgreementReport};
use crate::annotation::{
    AnnotationKey, ItemKey, PriorSource, SegmentAnnotation, Setting, Stage,
};
use crate::diff::{classify, error_count_ratio, summarize, DiffCounts, DiffRecord, DiffSummary, MatchMode};
use crate::error::{Error, Result};
use crate::qc::{injected_ids, qc_report, QcReport};

/// An indexed, immutable annotation snapshot.
#[derive(Debug, Clone)]
pub struct Dataset {
    annotations: Vec<SegmentAnnotation>,
    index: BTreeMap<AnnotationKey, usize>,
    excluded_docs: BTreeSet<String>,
    auto_ids: BTreeSet<String>,
}

impl Dataset {
    /// Automatic annotator ids are taken from `auto` prior sources.
    pub fn new(annotations: Vec<SegmentAnnotation>) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut auto_ids = BTreeSet::new();
        for (i, a) in annotations.iter().enumerate() {
            if let Some(PriorSource::Auto { system }) = &a.prior_source {
                auto_ids.insert(system.clone());
            }
            if index.insert(a.key(), i).is_some() {
                return Err(Error::DuplicateKey(a.key().to_string()));
            }
        }
        Ok(Self {
            annotations,
            index,
            excluded_docs: BTreeSet::new(),
            auto_ids,
        })
    }

    pub fn excluding<I: IntoIterator<Item = String>>(mut self, docs: I) -> Self {
        self.excluded_docs.extend(docs);
        self
    }

    pub fn with_auto_ids<I: IntoIterator<Item = String>>(mut self, ids: I) -> Self {
        self.auto_ids.extend(ids);
        self
    }

    pub fn annotations(&self) -> &[SegmentAnnotation] {
        &self.annotations
    }

    pub fn excluded_docs(&self) -> &BTreeSet<String> {
        &self.excluded_docs
    }

    pub fn is_auto(&self, rater_id: &str) -> bool {
        self.auto_ids.contains(rater_id)
    }

    /// Annotations outside excluded documents.
    pub fn analyzed(&self) -> impl Iterator<Item = &SegmentAnnotation> {
        self.annotations
            .iter()
            .filter(|a| !self.excluded_docs.contains(&a.doc_id))
    }

    pub fn get(&self, key: &AnnotationKey) -> Option<&SegmentAnnotation> {
        self.index.get(key).map(|&i| &self.annotations[i])
    }

    fn lookup(
        &self,
        item: &ItemKey,
        rater_id: &str,
        stage: Stage,
        prior_source: Option<PriorSource>,
    ) -> Option<&SegmentAnnotation> {
        self.get(&AnnotationKey {
            doc_id: item.doc_id.clone(),
            segment_index: item.segment_index,
            system_id: item.system_id.clone(),
            rater_id: rater_id.to_string(),
            stage,
            prior_source,
        })
    }

    /// The initial annotation a re-annotation started from.
    pub fn prior_of(&self, a: &SegmentAnnotation) -> Option<&SegmentAnnotation> {
        let source = a.prior_source.as_ref()?;
        self.lookup(&a.item(), source.id(), Stage::Initial, None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRates {
    pub setting: Setting,
    pub summary: DiffSummary,
}

/// Deleted/Changed/Kept/Added per re-annotation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRateReport {
    pub mode: MatchMode,
    /// Set when spans were matched by overlap rather than identity.
    pub heuristic: bool,
    pub excluded_documents: usize,
    pub settings: Vec<SettingRates>,
}

impl ChangeRateReport {
    pub fn setting(&self, setting: Setting) -> Option<&DiffSummary> {
        self.settings
            .iter()
            .find(|s| s.setting == setting)
            .map(|s| &s.summary)
    }
}

/// One diff record per analyzed re-annotation, with its setting and rater.
pub fn change_records(ds: &Dataset, mode: MatchMode) -> Result<Vec<(Setting, String, DiffRecord)>> {
    let mut out = Vec::new();
    for a in ds.analyzed() {
        let Some(setting) = a.reannotation_setting() else {
            continue;
        };
        let prior = ds
            .prior_of(a)
            .ok_or_else(|| Error::MissingPrior(a.key().to_string()))?;
        out.push((setting, a.rater_id.clone(), classify(mode, &prior.errors, &a.errors)));
    }
    if out.is_empty() {
        return Err(Error::NoReannotations);
    }
    Ok(out)
}

pub fn change_rates(ds: &Dataset, mode: MatchMode) -> Result<ChangeRateReport> {
    let mut pooled: BTreeMap<Setting, BTreeMap<String, DiffCounts>> = BTreeMap::new();
    for (setting, rater, record) in change_records(ds, mode)? {
        *pooled.entry(setting).or_default().entry(rater).or_default() += record.counts();
    }
    let mut settings = Vec::new();
    for setting in Setting::REANNOTATION {
        let Some(by_rater) = pooled.remove(&setting) else {
            continue;
        };
        match summarize(by_rater) {
            Ok(summary) => settings.push(SettingRates { setting, summary }),
            Err(Error::NoPriorErrors) => {}
            Err(e) => return Err(e),
        }
    }
    if settings.is_empty() {
        return Err(Error::NoPriorErrors);
    }
    Ok(ChangeRateReport {
        mode,
        heuristic: mode.is_heuristic(),
        excluded_documents: ds.excluded_docs.len(),
        settings,
    })
}

/// Re-annotator behavior on artificial spans. `qc_prior` is the injected
/// prior set; its documents select which re-annotations are considered.
pub fn qc_analysis(
    annotations: &[SegmentAnnotation],
    qc_prior: &[SegmentAnnotation],
    mode: MatchMode,
) -> Result<QcReport> {
    let priors: BTreeMap<ItemKey, &SegmentAnnotation> =
        qc_prior.iter().map(|a| (a.item(), a)).collect();
    let docs: BTreeSet<&str> = qc_prior.iter().map(|a| a.doc_id.as_str()).collect();
    let mut records = Vec::new();
    for a in annotations {
        if a.stage != Stage::ReAnnotation || !docs.contains(a.doc_id.as_str()) {
            continue;
        }
        let prior = priors
            .get(&a.item())
            .ok_or_else(|| Error::MissingPrior(a.key().to_string()))?;
        records.push((a.rater_id.as_str(), classify(mode, &prior.errors, &a.errors)));
    }
    let ids = injected_ids(qc_prior);
    qc_report(records.iter().map(|(r, d)| (*r, d)), &ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub ratio: f64,
    pub human_annotations: usize,
    pub auto_annotations: usize,
    pub excluded_documents: usize,
}

/// Human vs. automatic initial error counts over analyzed documents.
pub fn count_ratio(ds: &Dataset) -> Result<RatioReport> {
    let (autos, humans): (Vec<SegmentAnnotation>, Vec<SegmentAnnotation>) = ds
        .analyzed()
        .filter(|a| a.stage == Stage::Initial)
        .cloned()
        .partition(|a| ds.is_auto(&a.rater_id));
    if humans.is_empty() {
        return Err(Error::EmptyInput("no human initial annotations"));
    }
    if autos.is_empty() {
        return Err(Error::EmptyInput("no automatic initial annotations"));
    }
    Ok(RatioReport {
        ratio: error_count_ratio(&humans, &autos)?,
        human_annotations: humans.len(),
        auto_annotations: autos.len(),
        excluded_documents: ds.excluded_docs.len(),
    })
}

/// Per-document rater roles. `i` re-annotated their own work; `j` and `k`
/// re-annotated each other. When exactly one of `j`, `k` holds an automatic
/// task it is `j`; otherwise `j` is the smaller id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocRoles {
    pub doc_id: String,
    pub i: String,
    pub j: String,
    pub k: String,
    pub auto_i: Option<String>,
    pub auto_j: Option<String>,
    pub auto_k: Option<String>,
}

/// Roles per document, plus documents whose structure does not fit the
/// three-rater design.
pub fn doc_roles(ds: &Dataset) -> (Vec<DocRoles>, Vec<String>) {
    #[derive(Default)]
    struct Seen {
        selves: BTreeSet<String>,
        cross: BTreeSet<(String, String)>,
        auto: BTreeMap<String, BTreeSet<String>>,
    }
    let mut docs: BTreeMap<&str, Seen> = BTreeMap::new();
    for a in ds.analyzed() {
        let seen = docs.entry(&a.doc_id).or_default();
        match (a.reannotation_setting(), &a.prior_source) {
            (Some(Setting::SelfReview), _) => {
                seen.selves.insert(a.rater_id.clone());
            }
            (Some(Setting::Other), Some(p)) => {
                seen.cross.insert((a.rater_id.clone(), p.id().to_string()));
            }
            (Some(Setting::Auto), Some(p)) => {
                seen.auto
                    .entry(a.rater_id.clone())
                    .or_default()
                    .insert(p.id().to_string());
            }
            _ => {}
        }
    }
    let mut roles = Vec::new();
    let mut skipped = Vec::new();
    for (doc_id, seen) in docs {
        let single_auto = |r: &str| -> core::result::Result<Option<String>, ()> {
            match seen.auto.get(r) {
                None => Ok(None),
                Some(s) if s.len() == 1 => Ok(s.iter().next().cloned()),
                Some(_) => Err(()),
            }
        };
        let derived = (|| {
            if seen.selves.len() != 1 || seen.cross.len() != 2 {
                return None;
            }
            let i = seen.selves.iter().next()?.clone();
            let mut pairs = seen.cross.iter();
            let (a, b) = pairs.next()?;
            let (c, d) = pairs.next()?;
            if a != d || b != c || *a == i || *b == i {
                return None;
            }
            let (mut j, mut k) = (a.clone(), b.clone());
            let (aj, ak) = (single_auto(&j).ok()?, single_auto(&k).ok()?);
            let (mut auto_j, mut auto_k) = (aj, ak);
            if auto_j.is_none() && auto_k.is_some() {
                core::mem::swap(&mut j, &mut k);
                core::mem::swap(&mut auto_j, &mut auto_k);
            }
            Some(DocRoles {
                doc_id: doc_id.to_string(),
                auto_i: single_auto(&i).ok()?,
                i,
                j,
                k,
                auto_j,
                auto_k,
            })
        })();
        match derived {
            Some(r) => roles.push(r),
            None => skipped.push(doc_id.to_string()),
        }
    }
    (roles, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    SingleI,
    SelfI,
    AutoI,
    SingleJ,
    OtherJ,
    AutoJ,
    SingleK,
    OtherK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Party {
    I,
    J,
    K,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::SingleI => "h_i",
            Role::SelfI => "h_i|h_i",
            Role::AutoI => "h_i|a_x",
            Role::SingleJ => "h_j",
            Role::OtherJ => "h_j|h_k",
            Role::AutoJ => "h_j|a_y",
            Role::SingleK => "h_k",
            Role::OtherK => "h_k|h_j",
        }
    }

    /// Human raters whose work the role's annotation reflects.
    fn parties(self) -> &'static [Party] {
        match self {
            Role::SingleI | Role::SelfI | Role::AutoI => &[Party::I],
            Role::SingleJ | Role::AutoJ => &[Party::J],
            Role::SingleK => &[Party::K],
            Role::OtherJ | Role::OtherK => &[Party::J, Party::K],
        }
    }

    fn resolve<'a>(self, ds: &'a Dataset, r: &DocRoles, item: &ItemKey) -> Option<&'a SegmentAnnotation> {
        let human = |rater: &str| Some(PriorSource::Human { rater: rater.to_string() });
        let auto = |system: &Option<String>| {
            system.as_ref().map(|s| PriorSource::Auto { system: s.clone() })
        };
        let re = Stage::ReAnnotation;
        match self {
            Role::SingleI => ds.lookup(item, &r.i, Stage::Initial, None),
            Role::SelfI => ds.lookup(item, &r.i, re, human(&r.i)),
            Role::AutoI => ds.lookup(item, &r.i, re, Some(auto(&r.auto_i)?)),
            Role::SingleJ => ds.lookup(item, &r.j, Stage::Initial, None),
            Role::OtherJ => ds.lookup(item, &r.j, re, human(&r.k)),
            Role::AutoJ => ds.lookup(item, &r.j, re, Some(auto(&r.auto_j)?)),
            Role::SingleK => ds.lookup(item, &r.k, Stage::Initial, None),
            Role::OtherK => ds.lookup(item, &r.k, re, human(&r.j)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFilter {
    #[default]
    All,
    /// Keep only documents where the self-reviewing rater also held an
    /// automatic task.
    SelfRaterHasAuto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub rows: Vec<Role>,
    pub cols: Vec<Role>,
    pub filter: MatrixFilter,
}

impl MatrixSpec {
    /// Single/Self rows against both members of the Other pair.
    pub fn human() -> Self {
        Self {
            rows: Vec::from([Role::SingleI, Role::SelfI]),
            cols: Vec::from([Role::SingleJ, Role::OtherJ, Role::SingleK, Role::OtherK]),
            filter: MatrixFilter::All,
        }
    }

    /// Single/Auto/Self rows against Single/Auto/Other columns, restricted
    /// to documents where every cell has data.
    pub fn auto() -> Self {
        Self {
            rows: Vec::from([Role::SingleI, Role::AutoI, Role::SelfI]),
            cols: Vec::from([Role::SingleJ, Role::AutoJ, Role::OtherJ]),
            filter: MatrixFilter::SelfRaterHasAuto,
        }
    }

    fn check_disjoint(&self) -> Result<()> {
        for &row in &self.rows {
            for &col in &self.cols {
                let shared: Vec<String> = row
                    .parties()
                    .iter()
                    .filter(|p| col.parties().contains(p))
                    .map(|p| format!("{p:?}").to_lowercase())
                    .collect();
                if !shared.is_empty() {
                    return Err(Error::RaterOverlap {
                        row: row.label().to_string(),
                        col: col.label().to_string(),
                        raters: shared,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub filter: MatrixFilter,
    pub documents: Vec<String>,
    /// Documents whose rater structure did not fit the design.
    pub skipped_documents: Vec<String>,
    pub excluded_documents: usize,
    /// Items (segment × system) every cell is computed over.
    pub items: usize,
    pub cells: Vec<Vec<AgreementReport>>,
}

impl AgreementMatrix {
    pub fn cell(&self, row: usize, col: usize) -> &AgreementReport {
        &self.cells[row][col]
    }
}

/// Documents a filter keeps.
pub fn filter_documents(roles: &[DocRoles], filter: MatrixFilter) -> Vec<&DocRoles> {
    roles
        .iter()
        .filter(|r| match filter {
            MatrixFilter::All => true,
            MatrixFilter::SelfRaterHasAuto => r.auto_i.is_some(),
        })
        .collect()
}

/// Character F1 and PRA for every row × column role pair, all over the same
/// items: those where every role in `spec` has an annotation.
pub fn agreement_matrix(
    ds: &Dataset,
    spec: &MatrixSpec,
    options: &AgreementOptions<'_>,
) -> Result<AgreementMatrix> {
    spec.check_disjoint()?;
    if spec.rows.is_empty() || spec.cols.is_empty() {
        return Err(Error::EmptyInput("matrix without rows or columns"));
    }
    let (roles, skipped_documents) = doc_roles(ds);
    let kept = filter_documents(&roles, spec.filter);
    let all_roles: BTreeSet<Role> = spec.rows.iter().chain(&spec.cols).copied().collect();

    let mut by_doc: BTreeMap<&str, BTreeSet<ItemKey>> = BTreeMap::new();
    for a in ds.analyzed() {
        by_doc.entry(&a.doc_id).or_default().insert(a.item());
    }
    let mut columns: BTreeMap<Role, Vec<SegmentAnnotation>> = BTreeMap::new();
    let mut documents = Vec::new();
    let mut items = 0usize;
    for r in kept {
        let mut used = false;
        for item in by_doc.get(r.doc_id.as_str()).into_iter().flatten() {
            let resolved: Option<Vec<(Role, &SegmentAnnotation)>> = all_roles
                .iter()
                .map(|&role| role.resolve(ds, r, item).map(|a| (role, a)))
                .collect();
            let Some(resolved) = resolved else { continue };
            for (role, a) in resolved {
                columns.entry(role).or_default().push(a.clone());
            }
            items += 1;
            used = true;
        }
        if used {
            documents.push(r.doc_id.clone());
        }
    }
    if items == 0 {
        return Err(Error::EmptyIntersection {
            row: spec.rows[0].label().to_string(),
            col: spec.cols[0].label().to_string(),
        });
    }
    let cells = spec
        .rows
        .iter()
        .map(|row| {
            spec.cols
                .iter()
                .map(|col| {
                    agreement_report(
                        row.label(),
                        col.label(),
                        &columns[row],
                        &columns[col],
                        options,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AgreementMatrix {
        rows: spec.rows.iter().map(|r| r.label().to_string()).collect(),
        cols: spec.cols.iter().map(|c| c.label().to_string()).collect(),
        filter: spec.filter,
        documents,
        skipped_documents,
        excluded_documents: ds.excluded_docs.len(),
        items,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::{Aggregation, SideSelection};
    use crate::annotation::{ErrorAnnotation, Severity, Side};
    use crate::category::Category;
    use crate::scoring::WeightScheme;
    use crate::simulate::{simulate, toy_config, Behavior, Behaviors};

    fn options<'a>(corpus: &'a crate::Corpus, w: &'a WeightScheme) -> AgreementOptions<'a> {
        AgreementOptions {
            corpus,
            weights: w,
            sides: SideSelection::Target,
            aggregation: Aggregation::Micro,
        }
    }

    #[test]
    fn keep_everything_gives_kept_100() {
        let mut cfg = toy_config(6, 3, 4, 9);
        cfg.behavior = Behaviors::uniform(Behavior::keep_all());
        let sim = simulate(&cfg).unwrap();
        let ds = Dataset::new(sim.annotations).unwrap();
        let report = change_rates(&ds, MatchMode::Id).unwrap();
        assert_eq!(report.settings.len(), 3);
        for s in &report.settings {
            assert_eq!(s.summary.macro_rates.kept, 100.0);
            assert_eq!(s.summary.macro_rates.added, 0.0);
        }
    }

    #[test]
    fn no_reannotations_is_an_error() {
        let sim = simulate(&toy_config(2, 2, 3, 1)).unwrap();
        let initial: Vec<_> = sim.initial().cloned().collect();
        let ds = Dataset::new(initial).unwrap();
        assert_eq!(change_rates(&ds, MatchMode::Id), Err(Error::NoReannotations));
    }

    #[test]
    fn missing_prior_is_reported() {
        let sim = simulate(&toy_config(2, 2, 3, 1)).unwrap();
        let reanno: Vec<_> = sim.reannotations().cloned().collect();
        let ds = Dataset::new(reanno).unwrap();
        assert!(matches!(change_rates(&ds, MatchMode::Id), Err(Error::MissingPrior(_))));
    }

    #[test]
    fn roles_follow_the_plan() {
        let sim = simulate(&toy_config(12, 1, 3, 4)).unwrap();
        let ds = Dataset::new(sim.annotations.clone()).unwrap();
        let (roles, skipped) = doc_roles(&ds);
        assert!(skipped.is_empty());
        assert_eq!(roles.len(), 12);
        for r in &roles {
            let doc = sim.plan.document(&r.doc_id).unwrap();
            assert_eq!(r.i, doc.self_rater);
            assert_eq!(r.auto_i.as_deref(), doc.auto_of(&r.i));
            if r.auto_i.is_some() {
                assert!(r.auto_j.is_some());
                assert!(r.auto_k.is_none());
            }
        }
    }

    #[test]
    fn identical_sides_agree_perfectly() {
        let sim = simulate(&toy_config(3, 2, 4, 2)).unwrap();
        let w = WeightScheme::mqm_default();
        let humans: Vec<_> = sim.initial().filter(|a| a.rater_id.starts_with("rater")).cloned().collect();
        let ds = Dataset::new(sim.annotations.clone()).unwrap();
        let (roles, _) = doc_roles(&ds);
        let left: Vec<_> = humans
            .iter()
            .filter(|a| roles.iter().any(|r| r.doc_id == a.doc_id && r.i == a.rater_id))
            .cloned()
            .collect();
        let rep = agreement_report("h_i", "h_i", &left, &left, &options(&sim.corpus, &w)).unwrap();
        assert_eq!(rep.pra, 1.0);
        assert_eq!(rep.char_f1, 1.0);
    }

    #[test]
    fn human_matrix_shape() {
        let sim = simulate(&toy_config(6, 2, 4, 3)).unwrap();
        let w = WeightScheme::mqm_default();
        let ds = Dataset::new(sim.annotations.clone()).unwrap();
        let m = agreement_matrix(&ds, &MatrixSpec::human(), &options(&sim.corpus, &w)).unwrap();
        assert_eq!(m.cells.len(), 2);
        assert_eq!(m.cells[0].len(), 4);
        assert_eq!(m.items, 6 * 2 * 4);
        for row in &m.cells {
            for c in row {
                assert!((0.0..=1.0).contains(&c.char_f1) && (0.0..=1.0).contains(&c.pra));
                assert_eq!(c.items, m.items);
            }
        }
    }

    #[test]
    fn auto_matrix_uses_filtered_documents() {
        let sim = simulate(&toy_config(30, 1, 3, 8)).unwrap();
        let w = WeightScheme::mqm_default();
        let ds = Dataset::new(sim.annotations.clone()).unwrap();
        let m = agreement_matrix(&ds, &MatrixSpec::auto(), &options(&sim.corpus, &w)).unwrap();
        let expected: Vec<String> = sim
            .plan
            .documents
            .iter()
            .filter(|d| d.auto.iter().any(|a| a.rater == d.self_rater))
            .map(|d| d.doc_id.clone())
            .collect();
        assert_eq!(m.documents, expected);
        // refA has no automatic annotations, so two non-reference systems per doc
        assert_eq!(m.items, expected.len() * 2);
    }

    #[test]
    fn overlapping_raters_rejected() {
        let sim = simulate(&toy_config(2, 1, 3, 8)).unwrap();
        let w = WeightScheme::mqm_default();
        let ds = Dataset::new(sim.annotations.clone()).unwrap();
        let spec = MatrixSpec {
            rows: Vec::from([Role::SingleK]),
            cols: Vec::from([Role::OtherJ]),
            filter: MatrixFilter::All,
        };
        assert!(matches!(
            agreement_matrix(&ds, &spec, &options(&sim.corpus, &w)),
            Err(Error::RaterOverlap { .. })
        ));
    }

    #[test]
    fn disjoint_random_raters_have_near_zero_f1() {
        // two raters marking alternating halves of every segment never overlap
        let sim = simulate(&toy_config(2, 3, 3, 6)).unwrap();
        let mk = |rater: &str, even: bool| -> Vec<SegmentAnnotation> {
            sim.corpus
                .segments()
                .iter()
                .flat_map(|s| {
                    s.targets.iter().map(move |(sys, t)| {
                        let half = t.chars().count() / 2;
                        let (start, end) = if even { (0, half) } else { (half, half * 2) };
                        let e = ErrorAnnotation::new(
                            "x",
                            Side::Target,
                            start,
                            end,
                            Category::leaf("Fluency", "Grammar"),
                            Severity::Minor,
                        );
                        SegmentAnnotation::initial(&ItemKey::new(&s.doc_id, s.segment_index, sys), rater, Vec::from([e]))
                    })
                })
                .collect()
        };
        let w = WeightScheme::mqm_default();
        let rep = agreement_report("a", "b", &mk("a", true), &mk("b", false), &options(&sim.corpus, &w)).unwrap();
        assert_eq!(rep.char_f1, 0.0);
    }

    #[test]
    fn qc_doc_is_excluded_and_analyzed_separately() {
        let mut cfg = toy_config(5, 2, 3, 12);
        cfg.qc_doc = Some("doc002".into());
        let sim = simulate(&cfg).unwrap();
        let qc = sim.qc.clone().unwrap();
        let ds = Dataset::new(sim.annotations.clone())
            .unwrap()
            .excluding([String::from("doc002")]);
        assert!(ds.analyzed().all(|a| a.doc_id != "doc002"));
        let rates = change_rates(&ds, MatchMode::Id).unwrap();
        assert_eq!(rates.excluded_documents, 1);
        let report = qc_analysis(&sim.annotations, &qc.prior, MatchMode::Id).unwrap();
        let total = report.summary.macro_rates.retained_total();
        assert!((total - 100.0).abs() < 1e-9);
        assert_eq!(report.summary.per_rater.len(), 3);
    }

    #[test]
    fn ratio_over_simulated_campaign() {
        let mut cfg = toy_config(10, 4, 4, 21);
        cfg.human_error_rate = 2.7;
        cfg.auto_error_rate = 1.0;
        let sim = simulate(&cfg).unwrap();
        let ds = Dataset::new(sim.annotations).unwrap();
        let r = count_ratio(&ds).unwrap();
        assert!((r.ratio - 2.7).abs() < 0.3, "{}", r.ratio);
    }
}
