//! Shared fixtures: a toy campaign and scripted raters driving the service.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use mqm_reanno::core::simulate::{simulate, toy_config, SimulatedCampaign};
use mqm_reanno::core::{Category, CategoryRegistry, EditKind, ItemKey, Severity, Side, Stage};
use mqm_reanno::service::{
    CampaignInputs, ErrorView, EventRequest, NextTask, QcSetup, Service, ServiceConfig, ServiceError,
    TaskPayload,
};

pub const AUTO_IDS: [&str; 2] = ["auto-a", "auto-b"];

pub fn toy(docs: usize, segments: usize, systems: usize, seed: u64) -> (SimulatedCampaign, CampaignInputs) {
    let sim = simulate(&toy_config(docs, segments, systems, seed)).expect("toy simulation");
    let auto_annotations = sim
        .initial()
        .filter(|a| AUTO_IDS.contains(&a.rater_id.as_str()))
        .cloned()
        .collect();
    let inputs = CampaignInputs {
        plan: sim.plan.clone(),
        corpus: sim.corpus.clone(),
        registry: CategoryRegistry::mqm_default(),
        auto_annotations,
    };
    (sim, inputs)
}

pub fn open(log: &Path, inputs: &CampaignInputs, qc_doc: Option<&str>) -> Service {
    Service::open(log, inputs.clone(), config(qc_doc)).expect("open service")
}

pub fn config(qc_doc: Option<&str>) -> ServiceConfig {
    ServiceConfig {
        qc: qc_doc.map(|d| QcSetup {
            doc_id: d.to_string(),
            seed: 11,
            tokenizer: Default::default(),
        }),
        ..ServiceConfig::default()
    }
}

pub fn raters(inputs: &CampaignInputs) -> Vec<String> {
    let mut r: Vec<String> = inputs.plan.tasks.iter().map(|t| t.rater_id.clone()).collect();
    r.sort();
    r.dedup();
    r
}

fn categories() -> Vec<Category> {
    CategoryRegistry::mqm_default().leaves()
}

/// A scripted rater. Keeps its own copy of every task's errors, updated only
/// from acknowledged events, so it can be compared with the service.
pub struct Driver {
    rng: StdRng,
    categories: Vec<Category>,
    pub model: BTreeMap<String, BTreeMap<usize, Vec<ErrorView>>>,
    pub acked: usize,
}

impl Driver {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: StdRng::seed_from_u64(seed),
            categories: categories(),
            model: BTreeMap::new(),
            acked: 0,
        }
    }

    fn random_span(&mut self, len: usize) -> Option<ErrorView> {
        if len == 0 {
            return None;
        }
        let start = self.rng.gen_range(0..len);
        let end = self.rng.gen_range(start + 1..=len.min(start + 12));
        Some(ErrorView {
            id: String::new(),
            side: Side::Target,
            start,
            end,
            category: self.categories[self.rng.gen_range(0..self.categories.len())].clone(),
            severity: if self.rng.gen_bool(0.3) { Severity::Major } else { Severity::Minor },
        })
    }

    fn send(&mut self, svc: &Service, rater: &str, task: &str, req: EventRequest) -> Result<(), ServiceError> {
        let seg = req.segment_index;
        let kind = req.kind;
        let payload = req.payload.clone();
        let ack = svc.post_event(rater, task, req)?;
        self.acked += 1;
        let errors = self.model.get_mut(task).unwrap().get_mut(&seg).unwrap();
        match kind {
            EditKind::Add => {
                let mut v = payload.unwrap();
                v.id = ack.error_id;
                errors.push(v);
            }
            EditKind::Modify => {
                let v = payload.unwrap();
                let pos = errors.iter().position(|e| e.id == v.id).unwrap();
                errors[pos] = v;
            }
            EditKind::Delete => errors.retain(|e| e.id != ack.error_id),
        }
        Ok(())
    }

    /// Initial tasks copy the simulated human annotation when one exists;
    /// re-annotation tasks get random deletes, modifies and adds.
    pub fn work(
        &mut self,
        svc: &Service,
        rater: &str,
        payload: &TaskPayload,
        sim: Option<&SimulatedCampaign>,
    ) -> Result<(), ServiceError> {
        let task = payload.task_id.clone();
        self.model.insert(
            task.clone(),
            payload
                .segments
                .iter()
                .map(|s| (s.segment_index, s.errors.clone()))
                .collect(),
        );
        let stage = sim
            .and_then(|s| s.plan.task(&task))
            .map(|t| t.stage)
            .unwrap_or(Stage::ReAnnotation);
        for seg in &payload.segments {
            let len = seg.target_text.chars().count();
            let copied = sim.filter(|_| stage == Stage::Initial).and_then(|s| {
                let item = ItemKey::new(&payload.doc_id, seg.segment_index, &payload.system_id);
                s.initial().find(|a| a.item() == item && a.rater_id == rater)
            });
            if let Some(a) = copied {
                for e in a.errors.clone() {
                    let req = EventRequest {
                        segment_index: seg.segment_index,
                        kind: EditKind::Add,
                        error_id: None,
                        payload: Some(ErrorView {
                            id: String::new(),
                            side: e.side,
                            start: e.start,
                            end: e.end,
                            category: e.category,
                            severity: e.severity,
                        }),
                    };
                    self.send(svc, rater, &task, req)?;
                }
            } else {
                for e in seg.errors.clone() {
                    let roll: f64 = self.rng.gen();
                    if roll < 0.25 {
                        let req = EventRequest {
                            segment_index: seg.segment_index,
                            kind: EditKind::Delete,
                            error_id: Some(e.id.clone()),
                            payload: None,
                        };
                        self.send(svc, rater, &task, req)?;
                    } else if roll < 0.5 {
                        let mut v = e.clone();
                        v.severity = match v.severity {
                            Severity::Major => Severity::Minor,
                            Severity::Minor => Severity::Major,
                        };
                        let req = EventRequest {
                            segment_index: seg.segment_index,
                            kind: EditKind::Modify,
                            error_id: Some(e.id.clone()),
                            payload: Some(v),
                        };
                        self.send(svc, rater, &task, req)?;
                    }
                }
                while self.rng.gen_bool(0.3) {
                    let Some(v) = self.random_span(len) else { break };
                    let req = EventRequest {
                        segment_index: seg.segment_index,
                        kind: EditKind::Add,
                        error_id: None,
                        payload: Some(v),
                    };
                    self.send(svc, rater, &task, req)?;
                }
            }
            svc.heartbeat(rater, &task, seg.segment_index, self.rng.gen_range(1.0..20.0))?;
        }
        svc.submit(rater, &task, &[])?;
        Ok(())
    }
}

/// Run every rater to completion, round robin. Returns submitted task count.
pub fn run_campaign(svc: &Service, inputs: &CampaignInputs, sim: Option<&SimulatedCampaign>, driver: &mut Driver) -> usize {
    let raters = raters(inputs);
    let mut done = 0;
    loop {
        let mut progressed = false;
        let mut finished = 0;
        for r in &raters {
            match svc.next_task(r).expect("next task") {
                NextTask::Task(p) => {
                    driver.work(svc, r, &p, sim).expect("work task");
                    done += 1;
                    progressed = true;
                }
                NextTask::Waiting { .. } => {}
                NextTask::Done => finished += 1,
            }
        }
        if finished == raters.len() {
            return done;
        }
        assert!(progressed, "campaign deadlocked");
    }
}

/// Campaign shapes of the two published language pairs: segments spread over
/// documents, systems including one reference, raters, two automatic
/// annotators.
pub fn shape(name: &str, seed: u64) -> mqm_reanno::core::CampaignConfig {
    use mqm_reanno::core::planner::{DocumentSpec, SystemSpec};
    let (segments, docs, systems, raters) = match name {
        "zh-en" => (247, 25, 16, 8),
        "en-de" => (100, 29, 13, 10),
        other => panic!("unknown shape {other}"),
    };
    let documents = (0..docs)
        .map(|d| DocumentSpec {
            doc_id: format!("{name}-doc{d:02}"),
            segments: segments / docs + usize::from(d < segments % docs),
        })
        .collect();
    let mut system_specs: Vec<SystemSpec> = (1..systems)
        .map(|s| SystemSpec {
            id: format!("sys{s:02}"),
            reference: false,
        })
        .collect();
    system_specs.push(SystemSpec {
        id: "refA".into(),
        reference: true,
    });
    mqm_reanno::core::CampaignConfig {
        documents,
        systems: system_specs,
        raters: (1..=raters).map(|r| format!("rater{r:02}")).collect(),
        auto_annotators: AUTO_IDS.iter().map(|s| s.to_string()).collect(),
        raters_per_doc: 3,
        seed,
    }
}
