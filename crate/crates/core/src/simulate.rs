//! Seeded synthetic campaigns.
//!
//! Generates a corpus, a plan, initial annotations from humans and automatic
//! annotators, and re-annotations produced by simulated raters whose
//! delete/change/add behavior is configured per setting. Re-annotations are
//! written as edit events and replayed, exactly like real tasks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{
    replay_events, Corpus, EditEvent, EditKind, ErrorAnnotation, ItemKey, PriorSource, Segment,
    SegmentAnnotation, Setting, Severity, Side, Stage,
};
use crate::category::{Category, CategoryRegistry};
use crate::error::{Error, Result};
use crate::id::{keyed_rng, opaque_id};
use crate::planner::{plan_campaign, CampaignConfig, CampaignPlan, PlannedTask};
use crate::qc::{inject_document, is_retired_qc_task, tokenize, InjectionConfig, InjectionOutcome, Tokenizer};

const WORDS: &[&str] = &[
    "the", "report", "said", "market", "river", "city", "new", "policy", "growth", "team",
    "water", "school", "plan", "year", "green", "energy", "price", "people", "local", "data",
    "quickly", "under", "across", "strong", "light", "open", "public", "road", "health", "night",
];

/// What a simulated re-annotator does with each prior error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub delete: f64,
    pub change: f64,
    /// Errors added per prior error, on average.
    pub add_rate: f64,
}

impl Behavior {
    pub fn keep(&self) -> f64 {
        1.0 - self.delete - self.change
    }

    pub fn keep_all() -> Self {
        Self {
            delete: 0.0,
            change: 0.0,
            add_rate: 0.0,
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        let prob = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !prob(self.delete)
            || !prob(self.change)
            || self.delete + self.change > 1.0 + 1e-12
            || !self.add_rate.is_finite()
            || self.add_rate < 0.0
        {
            return Err(Error::InvalidSimulation(format!(
                "behavior `{name}` is not a valid distribution"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Behaviors {
    #[serde(rename = "self")]
    pub self_review: Behavior,
    pub other: Behavior,
    pub auto: Behavior,
}

impl Behaviors {
    pub fn uniform(b: Behavior) -> Self {
        Self {
            self_review: b,
            other: b,
            auto: b,
        }
    }

    pub fn get(&self, setting: Setting) -> Behavior {
        match setting {
            Setting::Auto => self.auto,
            Setting::Other => self.other,
            _ => self.self_review,
        }
    }
}

fn default_words() -> (usize, usize) {
    (8, 20)
}

fn default_major() -> f64 {
    0.3
}

fn default_qc_behavior() -> Behavior {
    Behavior {
        delete: 0.8,
        change: 0.05,
        add_rate: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub campaign: CampaignConfig,
    /// Inclusive range of words per target segment.
    #[serde(default = "default_words")]
    pub words_per_segment: (usize, usize),
    /// Mean errors per human initial segment annotation.
    pub human_error_rate: f64,
    /// Mean errors per automatic initial segment annotation.
    pub auto_error_rate: f64,
    #[serde(default = "default_major")]
    pub major_probability: f64,
    pub behavior: Behaviors,
    /// Document that gets artificial spans; its re-annotation tasks start
    /// from the injected prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qc_doc: Option<String>,
    /// Applied to injected spans only.
    #[serde(default = "default_qc_behavior")]
    pub qc_behavior: Behavior,
}

impl SimulationConfig {
    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.words_per_segment;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidSimulation("words_per_segment".into()));
        }
        for (name, rate) in [
            ("human_error_rate", self.human_error_rate),
            ("auto_error_rate", self.auto_error_rate),
        ] {
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::InvalidSimulation(format!("{name} must be >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.major_probability) {
            return Err(Error::InvalidSimulation("major_probability".into()));
        }
        self.behavior.self_review.check("self")?;
        self.behavior.other.check("other")?;
        self.behavior.auto.check("auto")?;
        self.qc_behavior.check("qc")?;
        if let Some(doc) = &self.qc_doc {
            if !self.campaign.documents.iter().any(|d| &d.doc_id == doc) {
                return Err(Error::InvalidSimulation(format!("unknown qc document `{doc}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCampaign {
    pub corpus: Corpus,
    pub plan: CampaignPlan,
    /// Human and automatic initial annotations, then re-annotations.
    pub annotations: Vec<SegmentAnnotation>,
    pub events: Vec<EditEvent>,
    pub qc: Option<InjectionOutcome>,
}

impl SimulatedCampaign {
    pub fn initial(&self) -> impl Iterator<Item = &SegmentAnnotation> {
        self.annotations.iter().filter(|a| a.stage == Stage::Initial)
    }

    pub fn reannotations(&self) -> impl Iterator<Item = &SegmentAnnotation> {
        self.annotations
            .iter()
            .filter(|a| a.stage == Stage::ReAnnotation)
    }
}

/// `floor(mean)` plus one more with probability `frac(mean)`, so the
/// expectation is exactly `mean`.
fn draw_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    // mean >= 0, so truncation is floor
    let whole = mean as usize;
    let extra = rng.gen_bool((mean - whole as f64).clamp(0.0, 1.0));
    whole + usize::from(extra)
}

fn random_text(rng: &mut ChaCha8Rng, words: (usize, usize)) -> String {
    let n = rng.gen_range(words.0..=words.1);
    let picked: Vec<&str> = (0..n)
        .map(|_| *WORDS.choose(rng).expect("nonempty vocabulary"))
        .collect();
    picked.join(" ")
}

pub fn generate_corpus(cfg: &SimulationConfig) -> Result<Corpus> {
    let seed = cfg.campaign.seed;
    let mut segments = Vec::new();
    for doc in &cfg.campaign.documents {
        for index in 0..doc.segments {
            let idx = index.to_string();
            let mut rng = keyed_rng(seed, &["corpus", &doc.doc_id, &idx]);
            let source_text = random_text(&mut rng, cfg.words_per_segment);
            let targets = cfg
                .campaign
                .systems
                .iter()
                .map(|s| {
                    let mut rng = keyed_rng(seed, &["corpus", &doc.doc_id, &idx, &s.id]);
                    (s.id.clone(), random_text(&mut rng, cfg.words_per_segment))
                })
                .collect();
            segments.push(Segment {
                doc_id: doc.doc_id.clone(),
                segment_index: index,
                source_text,
                targets,
            });
        }
    }
    Corpus::new(segments)
}

struct ErrorFactory<'a> {
    categories: &'a [Category],
    major_probability: f64,
}

impl ErrorFactory<'_> {
    fn random_error(&self, rng: &mut ChaCha8Rng, id: String, text: &str) -> Option<ErrorAnnotation> {
        let tokens = tokenize(text, Tokenizer::Whitespace);
        if tokens.is_empty() {
            return None;
        }
        let width = rng.gen_range(1..=3usize).min(tokens.len());
        let first = rng.gen_range(0..=tokens.len() - width);
        let severity = if rng.gen_bool(self.major_probability) {
            Severity::Major
        } else {
            Severity::Minor
        };
        Some(ErrorAnnotation::new(
            id,
            Side::Target,
            tokens[first].0,
            tokens[first + width - 1].1,
            self.categories.choose(rng)?.clone(),
            severity,
        ))
    }

    fn errors(&self, rng: &mut ChaCha8Rng, mean: f64, id_parts: &[&str], text: &str) -> Vec<ErrorAnnotation> {
        let n = draw_count(rng, mean);
        (0..n)
            .filter_map(|i| {
                let i = i.to_string();
                let mut parts = id_parts.to_vec();
                parts.push(&i);
                self.random_error(rng, opaque_id(&parts), text)
            })
            .collect()
    }

    /// A modified copy that differs from `e` and still overlaps it.
    fn change(&self, rng: &mut ChaCha8Rng, e: &ErrorAnnotation, text_len: usize) -> ErrorAnnotation {
        let mut out = e.clone();
        match rng.gen_range(0..3) {
            0 => {
                out.severity = match e.severity {
                    Severity::Major => Severity::Minor,
                    Severity::Minor => Severity::Major,
                }
            }
            1 if self.categories.len() > 1 => loop {
                let c = self.categories.choose(rng).expect("nonempty");
                if *c != e.category {
                    out.category = c.clone();
                    break;
                }
            },
            _ => {
                if e.end < text_len {
                    out.end += 1;
                } else if e.end - e.start > 1 {
                    out.end -= 1;
                } else if e.start > 0 {
                    out.start -= 1;
                } else {
                    out.severity = match e.severity {
                        Severity::Major => Severity::Minor,
                        Severity::Minor => Severity::Major,
                    };
                }
            }
        }
        out
    }
}

/// Events a simulated rater posts on one segment of a re-annotation task.
#[allow(clippy::too_many_arguments)]
fn reannotate_segment(
    rng: &mut ChaCha8Rng,
    factory: &ErrorFactory<'_>,
    task: &PlannedTask,
    segment_index: usize,
    text: &str,
    prior: &[ErrorAnnotation],
    behavior: Behavior,
    qc_behavior: Behavior,
    clock: &mut u64,
) -> Vec<EditEvent> {
    let text_len = text.chars().count();
    let mut events = Vec::new();
    let mut push = |kind, error_id: String, payload: Option<ErrorAnnotation>| {
        *clock += 1;
        events.push(EditEvent {
            task_id: task.task_id.clone(),
            segment_index,
            timestamp: *clock,
            kind,
            error_id,
            payload,
        });
    };
    let mut real = 0usize;
    for e in prior {
        let b = if e.injected { qc_behavior } else { behavior };
        if !e.injected {
            real += 1;
        }
        let u: f64 = rng.gen();
        if u < b.delete {
            push(EditKind::Delete, e.id.clone(), None);
        } else if u < b.delete + b.change {
            let changed = factory.change(rng, e, text_len);
            push(EditKind::Modify, e.id.clone(), Some(changed));
        }
    }
    let index = segment_index.to_string();
    let adds = draw_count(rng, behavior.add_rate * real as f64);
    for n in 0..adds {
        let n = n.to_string();
        let id = opaque_id(&["sim-add", &task.task_id, &index, &n]);
        if let Some(e) = factory.random_error(rng, id.clone(), text) {
            push(EditKind::Add, id, Some(e));
        }
    }
    events
}

pub fn simulate(cfg: &SimulationConfig) -> Result<SimulatedCampaign> {
    cfg.check()?;
    let corpus = generate_corpus(cfg)?;
    let plan = plan_campaign(&cfg.campaign)?;
    let registry = CategoryRegistry::mqm_default();
    let categories = registry.leaves();
    let factory = ErrorFactory {
        categories: &categories,
        major_probability: cfg.major_probability,
    };
    let seed = cfg.campaign.seed;
    let text_of = |item: &ItemKey| -> &str {
        corpus
            .segment(&item.doc_id, item.segment_index)
            .and_then(|s| s.text(Side::Target, &item.system_id))
            .unwrap_or("")
    };

    let mut initial: BTreeMap<(ItemKey, String), SegmentAnnotation> = BTreeMap::new();
    for task in plan.tasks.iter().filter(|t| t.stage == Stage::Initial) {
        for segment in corpus.document_segments(&task.doc_id) {
            let item = ItemKey::new(&task.doc_id, segment.segment_index, &task.system_id);
            let index = segment.segment_index.to_string();
            let parts = ["sim-init", &task.rater_id, &task.doc_id, &index, &task.system_id];
            let mut rng = keyed_rng(seed, &parts);
            let errors = factory.errors(&mut rng, cfg.human_error_rate, &parts, text_of(&item));
            let mut a = SegmentAnnotation::initial(&item, &task.rater_id, errors);
            a.active_seconds = rng.gen_range(5.0..90.0);
            initial.insert((item, task.rater_id.clone()), a);
        }
    }
    for auto in &cfg.campaign.auto_annotators {
        for system in cfg.campaign.non_reference_systems() {
            for segment in corpus.segments() {
                let item = ItemKey::new(&segment.doc_id, segment.segment_index, &system.id);
                let index = segment.segment_index.to_string();
                let parts = ["sim-auto", auto, &segment.doc_id, &index, &system.id];
                let mut rng = keyed_rng(seed, &parts);
                let errors = factory.errors(&mut rng, cfg.auto_error_rate, &parts, text_of(&item));
                initial.insert((item.clone(), auto.clone()), SegmentAnnotation::initial(&item, auto, errors));
            }
        }
    }

    let qc = match &cfg.qc_doc {
        Some(doc_id) => {
            let assignment = plan.document(doc_id).expect("checked against campaign");
            let systems: Vec<String> = cfg.campaign.systems.iter().map(|s| s.id.clone()).collect();
            let humans: Vec<SegmentAnnotation> = initial
                .values()
                .filter(|a| a.doc_id == *doc_id)
                .cloned()
                .collect();
            Some(inject_document(
                &corpus,
                assignment,
                &systems,
                &humans,
                &InjectionConfig::new(doc_id, seed),
                &registry,
            )?)
        }
        None => None,
    };
    let qc_prior: BTreeMap<ItemKey, &SegmentAnnotation> = qc
        .iter()
        .flat_map(|q| q.prior.iter())
        .map(|a| (a.item(), a))
        .collect();

    let mut reannotations = Vec::new();
    let mut events = Vec::new();
    let served = plan.tasks.iter().filter(|t| {
        t.stage == Stage::ReAnnotation && !is_retired_qc_task(t, cfg.qc_doc.as_deref())
    });
    for task in served {
        let source = task.prior_source.clone().expect("re-annotation has a prior");
        let is_qc = cfg.qc_doc.as_deref() == Some(task.doc_id.as_str());
        let prior_source = if is_qc {
            let rater = qc.as_ref().expect("qc outcome").densest_rater.clone();
            PriorSource::Human { rater }
        } else {
            source.clone()
        };
        let mut rng = keyed_rng(seed, &["sim-reanno", &task.task_id]);
        let mut clock = 0u64;
        for segment in corpus.document_segments(&task.doc_id) {
            let item = ItemKey::new(&task.doc_id, segment.segment_index, &task.system_id);
            let prior: &[ErrorAnnotation] = if is_qc {
                &qc_prior
                    .get(&item)
                    .ok_or_else(|| Error::MissingPrior(item.to_string()))?
                    .errors
            } else {
                &initial
                    .get(&(item.clone(), source.id().to_string()))
                    .ok_or_else(|| Error::MissingPrior(item.to_string()))?
                    .errors
            };
            let seg_events = reannotate_segment(
                &mut rng,
                &factory,
                task,
                segment.segment_index,
                text_of(&item),
                prior,
                cfg.behavior.get(task.setting),
                cfg.qc_behavior,
                &mut clock,
            );
            let errors = replay_events(prior, &seg_events)?;
            events.extend(seg_events);
            reannotations.push(SegmentAnnotation {
                doc_id: item.doc_id.clone(),
                segment_index: item.segment_index,
                system_id: item.system_id.clone(),
                rater_id: task.rater_id.clone(),
                stage: Stage::ReAnnotation,
                prior_source: Some(prior_source.clone()),
                errors,
                active_seconds: rng.gen_range(3.0..60.0),
            });
        }
    }

    let mut annotations: Vec<SegmentAnnotation> = initial.into_values().collect();
    annotations.extend(reannotations);
    Ok(SimulatedCampaign {
        corpus,
        plan,
        annotations,
        events,
        qc,
    })
}

/// A small ready-made configuration: `docs` documents of `segments`
/// segments, `systems` systems of which the last is the reference `refA`,
/// six raters and two automatic annotators.
pub fn toy_config(docs: usize, segments: usize, systems: usize, seed: u64) -> SimulationConfig {
    use crate::planner::{DocumentSpec, SystemSpec};
    let documents = (0..docs)
        .map(|d| DocumentSpec {
            doc_id: format!("doc{d:03}"),
            segments,
        })
        .collect();
    let mut system_specs: Vec<SystemSpec> = (1..systems)
        .map(|s| SystemSpec {
            id: format!("sys{s:02}"),
            reference: false,
        })
        .collect();
    system_specs.push(SystemSpec {
        id: "refA".to_string(),
        reference: true,
    });
    SimulationConfig {
        campaign: CampaignConfig {
            documents,
            systems: system_specs,
            raters: (1..=6).map(|r| format!("rater{r}")).collect(),
            auto_annotators: ["auto-a", "auto-b"].iter().map(|s| s.to_string()).collect(),
            raters_per_doc: 3,
            seed,
        },
        words_per_segment: default_words(),
        human_error_rate: 2.0,
        auto_error_rate: 0.75,
        major_probability: default_major(),
        behavior: Behaviors {
            self_review: Behavior {
                delete: 0.1,
                change: 0.15,
                add_rate: 0.3,
            },
            other: Behavior {
                delete: 0.2,
                change: 0.2,
                add_rate: 0.4,
            },
            auto: Behavior {
                delete: 0.35,
                change: 0.2,
                add_rate: 1.2,
            },
        },
        qc_doc: None,
        qc_behavior: default_qc_behavior(),
    }
}
