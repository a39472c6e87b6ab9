//! Randomized per-document assignment of initial and re-annotation tasks.
//!
//! For every document a group of raters is drawn (load-balanced over the
//! pool). One of them re-annotates their own work; the others re-annotate
//! each other in a cycle (a mutual swap for the usual three raters).
//! Independently, distinct raters of the group each take one automatic
//! annotator's output. Reference translations never get automatic tasks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{PriorSource, Setting, Stage};
use crate::error::{Error, Result};
use crate::id::keyed_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSpec {
    pub doc_id: String,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub id: String,
    /// Human reference translation; excluded from automatic annotation.
    #[serde(default)]
    pub reference: bool,
}

fn default_raters_per_doc() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub documents: Vec<DocumentSpec>,
    pub systems: Vec<SystemSpec>,
    pub raters: Vec<String>,
    pub auto_annotators: Vec<String>,
    #[serde(default = "default_raters_per_doc")]
    pub raters_per_doc: usize,
    #[serde(default)]
    pub seed: u64,
}

impl CampaignConfig {
    pub fn non_reference_systems(&self) -> impl Iterator<Item = &SystemSpec> {
        self.systems.iter().filter(|s| !s.reference)
    }

    pub fn check(&self) -> Result<()> {
        let infeasible = |msg: String| Err(Error::InfeasibleConfig(msg));
        if self.documents.is_empty() {
            return infeasible("no documents".into());
        }
        if self.systems.is_empty() {
            return infeasible("no systems".into());
        }
        if self.raters_per_doc < 3 {
            return infeasible(format!(
                "raters_per_doc = {} but self and cross re-annotation need at least 3",
                self.raters_per_doc
            ));
        }
        if self.raters.len() < self.raters_per_doc {
            return infeasible(format!(
                "rater pool of {} is smaller than raters_per_doc = {}",
                self.raters.len(),
                self.raters_per_doc
            ));
        }
        if self.auto_annotators.len() > self.raters_per_doc {
            return infeasible(format!(
                "{} automatic annotators need as many distinct raters per document",
                self.auto_annotators.len()
            ));
        }
        fn duplicates<'a>(mut ids: impl Iterator<Item = &'a str>) -> Option<String> {
            let mut seen = BTreeSet::new();
            ids.find(|id| !seen.insert(*id)).map(ToString::to_string)
        }
        if let Some(d) = duplicates(self.documents.iter().map(|d| d.doc_id.as_str())) {
            return infeasible(format!("duplicate document `{d}`"));
        }
        if let Some(d) = duplicates(self.systems.iter().map(|s| s.id.as_str())) {
            return infeasible(format!("duplicate system `{d}`"));
        }
        if let Some(d) = duplicates(
            &mut self
                .raters
                .iter()
                .chain(&self.auto_annotators)
                .map(String::as_str),
        ) {
            return infeasible(format!("duplicate rater or annotator id `{d}`"));
        }
        if let Some(d) = self.documents.iter().find(|d| d.segments == 0) {
            return infeasible(format!("document `{}` has no segments", d.doc_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossAssignment {
    /// Re-annotator.
    pub rater: String,
    /// Whose initial annotation they start from.
    pub prior_rater: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoAssignment {
    pub rater: String,
    pub system: String,
}

/// One document's assignment, applied to all its segments and systems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentAssignment {
    pub doc_id: String,
    pub segments: usize,
    pub raters: Vec<String>,
    pub self_rater: String,
    pub others: Vec<CrossAssignment>,
    pub auto: Vec<AutoAssignment>,
}

impl DocumentAssignment {
    pub fn auto_of(&self, rater: &str) -> Option<&str> {
        self.auto
            .iter()
            .find(|a| a.rater == rater)
            .map(|a| a.system.as_str())
    }
}

/// One rater × one document × one system × one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedTask {
    pub task_id: String,
    pub rater_id: String,
    pub doc_id: String,
    pub system_id: String,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_source: Option<PriorSource>,
    pub setting: Setting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignPlan {
    pub seed: u64,
    pub raters_per_doc: usize,
    pub systems: Vec<SystemSpec>,
    pub documents: Vec<DocumentAssignment>,
    pub tasks: Vec<PlannedTask>,
}

impl CampaignPlan {
    pub fn document(&self, doc_id: &str) -> Option<&DocumentAssignment> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn is_reference(&self, system_id: &str) -> bool {
        self.systems.iter().any(|s| s.id == system_id && s.reference)
    }

    pub fn task(&self, task_id: &str) -> Option<&PlannedTask> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }
}

pub fn plan_campaign(cfg: &CampaignConfig) -> Result<CampaignPlan> {
    cfg.check()?;
    let mut rng = keyed_rng(cfg.seed, &["campaign-plan"]);
    let mut load: BTreeMap<&str, usize> = cfg.raters.iter().map(|r| (r.as_str(), 0)).collect();
    let mut documents = Vec::with_capacity(cfg.documents.len());
    for doc in &cfg.documents {
        // least-loaded raters first, random among equals; keeps the spread of
        // per-rater document counts within one
        let mut pool: Vec<&str> = cfg.raters.iter().map(String::as_str).collect();
        pool.shuffle(&mut rng);
        pool.sort_by_key(|r| load[r]);
        let mut group: Vec<String> = pool[..cfg.raters_per_doc]
            .iter()
            .map(|r| r.to_string())
            .collect();
        for r in &group {
            *load.get_mut(r.as_str()).expect("rater in pool") += 1;
        }
        group.shuffle(&mut rng);

        let self_pos = rng.gen_range(0..group.len());
        let self_rater = group[self_pos].clone();
        let mut rest: Vec<String> = group
            .iter()
            .filter(|r| **r != self_rater)
            .cloned()
            .collect();
        rest.shuffle(&mut rng);
        let others = (0..rest.len())
            .map(|i| CrossAssignment {
                rater: rest[i].clone(),
                prior_rater: rest[(i + 1) % rest.len()].clone(),
            })
            .collect();

        let mut auto_raters = group.clone();
        auto_raters.shuffle(&mut rng);
        let mut systems = cfg.auto_annotators.clone();
        systems.shuffle(&mut rng);
        let auto = auto_raters
            .into_iter()
            .zip(systems)
            .map(|(rater, system)| AutoAssignment { rater, system })
            .collect();

        documents.push(DocumentAssignment {
            doc_id: doc.doc_id.clone(),
            segments: doc.segments,
            raters: group,
            self_rater,
            others,
            auto,
        });
    }
    let tasks = derive_tasks(&documents, &cfg.systems);
    Ok(CampaignPlan {
        seed: cfg.seed,
        raters_per_doc: cfg.raters_per_doc,
        systems: cfg.systems.clone(),
        documents,
        tasks,
    })
}

fn derive_tasks(documents: &[DocumentAssignment], systems: &[SystemSpec]) -> Vec<PlannedTask> {
    let mut tasks = Vec::new();
    let mut push = |doc: &DocumentAssignment,
                    system: &SystemSpec,
                    rater: &str,
                    stage: Stage,
                    prior_source: Option<PriorSource>,
                    setting: Setting| {
        tasks.push(PlannedTask {
            task_id: format!("task-{:06}", tasks.len() + 1),
            rater_id: rater.to_string(),
            doc_id: doc.doc_id.clone(),
            system_id: system.id.clone(),
            stage,
            prior_source,
            setting,
        });
    };
    for doc in documents {
        for system in systems {
            for rater in &doc.raters {
                push(doc, system, rater, Stage::Initial, None, Setting::Single);
            }
            push(
                doc,
                system,
                &doc.self_rater,
                Stage::ReAnnotation,
                Some(PriorSource::Human {
                    rater: doc.self_rater.clone(),
                }),
                Setting::SelfReview,
            );
            for cross in &doc.others {
                push(
                    doc,
                    system,
                    &cross.rater,
                    Stage::ReAnnotation,
                    Some(PriorSource::Human {
                        rater: cross.prior_rater.clone(),
                    }),
                    Setting::Other,
                );
            }
            if !system.reference {
                for auto in &doc.auto {
                    push(
                        doc,
                        system,
                        &auto.rater,
                        Stage::ReAnnotation,
                        Some(PriorSource::Auto {
                            system: auto.system.clone(),
                        }),
                        Setting::Auto,
                    );
                }
            }
        }
    }
    tasks
}

/// Segment-annotation counts per setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SettingCounts {
    pub single: usize,
    #[serde(rename = "self")]
    pub self_review: usize,
    pub other: usize,
    pub auto: usize,
}

impl SettingCounts {
    pub fn get(&self, setting: Setting) -> usize {
        match setting {
            Setting::Single => self.single,
            Setting::SelfReview => self.self_review,
            Setting::Other => self.other,
            Setting::Auto => self.auto,
        }
    }

    fn slot(&mut self, setting: Setting) -> &mut usize {
        match setting {
            Setting::Single => &mut self.single,
            Setting::SelfReview => &mut self.self_review,
            Setting::Other => &mut self.other,
            Setting::Auto => &mut self.auto,
        }
    }

    /// Closed form: Single = segments × systems × raters per document,
    /// Self = segments × systems, Other = (raters per document − 1) × Self,
    /// Auto = annotators × segments × non-reference systems.
    pub fn closed_form(cfg: &CampaignConfig) -> SettingCounts {
        let segments: usize = cfg.documents.iter().map(|d| d.segments).sum();
        let systems = cfg.systems.len();
        let non_reference = cfg.non_reference_systems().count();
        SettingCounts {
            single: segments * systems * cfg.raters_per_doc,
            self_review: segments * systems,
            other: (cfg.raters_per_doc - 1) * segments * systems,
            auto: cfg.auto_annotators.len() * segments * non_reference,
        }
    }
}

/// Count segment annotations implied by the plan's tasks.
pub fn expected_counts(plan: &CampaignPlan) -> SettingCounts {
    let segments: BTreeMap<&str, usize> = plan
        .documents
        .iter()
        .map(|d| (d.doc_id.as_str(), d.segments))
        .collect();
    let mut counts = SettingCounts::default();
    for task in &plan.tasks {
        *counts.slot(task.setting) += segments.get(task.doc_id.as_str()).copied().unwrap_or(0);
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanRule {
    MissingDocument,
    GroupSize,
    UnknownRater,
    SelfRaterOutsideGroup,
    SelfInCrossAssignment,
    CrossNotACycle,
    AutoRaterOutsideGroup,
    AutoRaterReused,
    AutoSystemReused,
    AutoCount,
    ReferenceInAuto,
    TaskMismatch,
    LoadImbalance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanViolation {
    /// `*` for plan-wide rules.
    pub doc_id: String,
    pub rule: PlanRule,
    pub detail: String,
}

pub fn validate_plan(plan: &CampaignPlan, cfg: &CampaignConfig) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let mut flag = |doc_id: &str, rule: PlanRule, detail: String| {
        out.push(PlanViolation {
            doc_id: doc_id.to_string(),
            rule,
            detail,
        })
    };
    let pool: BTreeSet<&str> = cfg.raters.iter().map(String::as_str).collect();
    let autos: BTreeSet<&str> = cfg.auto_annotators.iter().map(String::as_str).collect();

    for spec in &cfg.documents {
        if plan.document(&spec.doc_id).is_none() {
            flag(&spec.doc_id, PlanRule::MissingDocument, String::new());
        }
    }

    let mut load: BTreeMap<&str, usize> = pool.iter().map(|r| (*r, 0)).collect();
    for doc in &plan.documents {
        let id = doc.doc_id.as_str();
        let group: BTreeSet<&str> = doc.raters.iter().map(String::as_str).collect();
        if group.len() != doc.raters.len() || group.len() != cfg.raters_per_doc {
            flag(id, PlanRule::GroupSize, format!("{:?}", doc.raters));
        }
        for r in &group {
            match load.get_mut(r) {
                Some(n) => *n += 1,
                None => flag(id, PlanRule::UnknownRater, r.to_string()),
            }
        }
        if !group.contains(doc.self_rater.as_str()) {
            flag(id, PlanRule::SelfRaterOutsideGroup, doc.self_rater.clone());
        }

        // the non-self raters must each re-annotate exactly one other
        // non-self rater and be re-annotated exactly once
        let rest: BTreeSet<&str> = group
            .iter()
            .copied()
            .filter(|r| *r != doc.self_rater)
            .collect();
        if doc
            .others
            .iter()
            .any(|c| c.rater == doc.self_rater || c.prior_rater == doc.self_rater)
        {
            flag(id, PlanRule::SelfInCrossAssignment, doc.self_rater.clone());
        }
        let readers: Vec<&str> = doc.others.iter().map(|c| c.rater.as_str()).collect();
        let priors: Vec<&str> = doc.others.iter().map(|c| c.prior_rater.as_str()).collect();
        fn as_set<'a>(v: &[&'a str]) -> BTreeSet<&'a str> {
            v.iter().copied().collect()
        }
        if readers.len() != rest.len()
            || as_set(&readers) != rest
            || priors.len() != rest.len()
            || as_set(&priors) != rest
            || doc.others.iter().any(|c| c.rater == c.prior_rater)
        {
            flag(id, PlanRule::CrossNotACycle, format!("{:?}", doc.others));
        }

        let mut auto_raters = BTreeSet::new();
        let mut auto_systems = BTreeSet::new();
        for a in &doc.auto {
            if !group.contains(a.rater.as_str()) {
                flag(id, PlanRule::AutoRaterOutsideGroup, a.rater.clone());
            }
            if !auto_raters.insert(a.rater.as_str()) {
                flag(id, PlanRule::AutoRaterReused, a.rater.clone());
            }
            if !auto_systems.insert(a.system.as_str()) || !autos.contains(a.system.as_str()) {
                flag(id, PlanRule::AutoSystemReused, a.system.clone());
            }
        }
        if doc.auto.len() != cfg.auto_annotators.len() {
            flag(
                id,
                PlanRule::AutoCount,
                format!("{} of {}", doc.auto.len(), cfg.auto_annotators.len()),
            );
        }
    }

    for task in &plan.tasks {
        if task.setting == Setting::Auto && plan.is_reference(&task.system_id) {
            flag(&task.doc_id, PlanRule::ReferenceInAuto, task.task_id.clone());
        }
    }
    let expected = derive_tasks(&plan.documents, &cfg.systems);
    let strip = |t: &PlannedTask| {
        (
            t.rater_id.clone(),
            t.doc_id.clone(),
            t.system_id.clone(),
            t.stage,
            t.prior_source.clone(),
            t.setting,
        )
    };
    let want: BTreeSet<_> = expected.iter().map(strip).collect();
    let have: BTreeSet<_> = plan.tasks.iter().map(strip).collect();
    if want != have || plan.tasks.len() != expected.len() {
        let missing = want.difference(&have).count();
        let extra = have.difference(&want).count();
        flag(
            "*",
            PlanRule::TaskMismatch,
            format!("{missing} missing, {extra} unexpected"),
        );
    }

    if let (Some(min), Some(max)) = (load.values().min(), load.values().max()) {
        if max - min > 1 {
            flag("*", PlanRule::LoadImbalance, format!("min {min}, max {max}"));
        }
    }
    out
}
