//! Task-serving backend.
//!
//! All state is derived from an append-only JSON Lines log. Every accepted
//! request is written and synced before it is acknowledged, and reopening a
//! log replays it through the same code path, so a restarted service is in
//! exactly the last acknowledged state. A torn final line (crash mid-write)
//! was never acknowledged and is discarded.
//!
//! Rater-facing payloads carry only text and current error spans: no prior
//! source, no injected flags, no rater ids.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use mqm_reanno_core::id::opaque_id;
use mqm_reanno_core::planner::{CampaignPlan, PlannedTask};
use mqm_reanno_core::qc::{inject_document, is_retired_qc_task, InjectionConfig, InjectionLogEntry, Tokenizer};
use mqm_reanno_core::{
    annotation::apply_event, validate_annotation, Category, CategoryRegistry, Corpus, EditEvent,
    EditKind, ErrorAnnotation, ItemKey, PriorSource, ReplayFault, SegmentAnnotation,
    Severity, Side, Stage, Violation,
};

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[serde(tag = "error", rename_all = "kebab-case")]
pub enum ServiceError {
    #[error("unknown rater `{rater}`")]
    UnknownRater { rater: String },
    #[error("unknown task `{task_id}`")]
    UnknownTask { task_id: String },
    #[error("task `{task_id}` belongs to another rater")]
    NotOwner { task_id: String },
    #[error("task `{task_id}` is {status:?}")]
    NotInProgress { task_id: String, status: TaskStatus },
    #[error("segment {segment_index} is not part of the task")]
    UnknownSegment { segment_index: usize },
    #[error("event rejected: {fault}")]
    Rejected { fault: String },
    #[error("{message}")]
    BadRequest { message: String },
    #[error("segments not visited: {missing:?}")]
    Unvisited { missing: Vec<usize> },
    #[error("annotation invalid in {} segment(s)", .segments.len())]
    Invalid { segments: Vec<SegmentViolations> },
    #[error("storage: {message}")]
    Storage { message: String },
}

impl ServiceError {
    fn storage(e: impl std::fmt::Display) -> Self {
        ServiceError::Storage {
            message: e.to_string(),
        }
    }

    fn rejected(f: ReplayFault) -> Self {
        ServiceError::Rejected {
            fault: f.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentViolations {
    pub segment_index: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Open,
    InProgress,
    Submitted,
}

fn default_heartbeat_max() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcSetup {
    pub doc_id: String,
    pub seed: u64,
    #[serde(default)]
    pub tokenizer: Tokenizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Largest accepted interval per heartbeat; longer reports are clamped.
    #[serde(default = "default_heartbeat_max")]
    pub heartbeat_max_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qc: Option<QcSetup>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            heartbeat_max_seconds: default_heartbeat_max(),
            qc: None,
        }
    }
}

/// Everything fixed before the campaign starts.
#[derive(Debug, Clone)]
pub struct CampaignInputs {
    pub plan: CampaignPlan,
    pub corpus: Corpus,
    pub registry: CategoryRegistry,
    /// Initial annotations from automatic annotators.
    pub auto_annotations: Vec<SegmentAnnotation>,
}

/// An error as the rater sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorView {
    pub id: String,
    pub side: Side,
    pub start: usize,
    pub end: usize,
    pub category: Category,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentView {
    pub segment_index: usize,
    pub source_text: String,
    pub target_text: String,
    pub errors: Vec<ErrorView>,
}

/// Rater-facing task payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub task_id: String,
    pub doc_id: String,
    pub system_id: String,
    pub status: TaskStatus,
    pub segments: Vec<SegmentView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum NextTask {
    Task(TaskPayload),
    /// Tasks remain but all wait on other raters or automatic annotations.
    Waiting { remaining: usize },
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRequest {
    pub segment_index: usize,
    pub kind: EditKind,
    /// Required for modify and delete; ignored for add.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<ErrorView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub task_id: String,
    pub seq: usize,
    pub timestamp: u64,
    /// Server-assigned for adds.
    pub error_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SegmentPrior {
    segment_index: usize,
    errors: Vec<ErrorAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogRecord {
    Claim {
        task_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior_source: Option<PriorSource>,
        prior: Vec<SegmentPrior>,
    },
    Event {
        event: EditEvent,
    },
    Heartbeat {
        task_id: String,
        segment_index: usize,
        seconds: f64,
    },
    Submit {
        task_id: String,
        visited: Vec<usize>,
    },
    QcPrior {
        densest_rater: String,
        prior: Vec<SegmentAnnotation>,
        log: Vec<InjectionLogEntry>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct TaskState {
    status: TaskStatus,
    prior_source: Option<PriorSource>,
    prior: BTreeMap<usize, Vec<ErrorAnnotation>>,
    current: BTreeMap<usize, Vec<ErrorAnnotation>>,
    active: BTreeMap<usize, f64>,
    visited: BTreeSet<usize>,
    events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcState {
    pub densest_rater: String,
    pub prior: Vec<SegmentAnnotation>,
    pub log: Vec<InjectionLogEntry>,
}

struct State {
    inputs: CampaignInputs,
    cfg: ServiceConfig,
    by_id: HashMap<String, usize>,
    /// Per rater: task indices, initial stage first, then by document and
    /// system in plan order.
    queue: BTreeMap<String, Vec<usize>>,
    tasks: Vec<TaskState>,
    /// Submitted or imported initial annotations by (item, annotator).
    initial: BTreeMap<(ItemKey, String), Vec<ErrorAnnotation>>,
    events: Vec<EditEvent>,
    last_timestamp: u64,
    qc: Option<QcState>,
    log: File,
}

/// Snapshot of everything the log determines, for comparisons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceSnapshot {
    pub statuses: Vec<(String, TaskStatus)>,
    pub current: Vec<(String, BTreeMap<usize, Vec<ErrorAnnotation>>)>,
    pub annotations: Vec<SegmentAnnotation>,
    pub events: Vec<EditEvent>,
}

pub struct Service {
    path: PathBuf,
    state: Mutex<State>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn view(e: &ErrorAnnotation) -> ErrorView {
    ErrorView {
        id: e.id.clone(),
        side: e.side,
        start: e.start,
        end: e.end,
        category: e.category.clone(),
        severity: e.severity,
    }
}

impl Service {
    /// Open (or create) the log at `path` and replay it.
    pub fn open(path: &Path, inputs: CampaignInputs, cfg: ServiceConfig) -> Result<Self, ServiceError> {
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .append(true)
            .open(path)
            .map_err(ServiceError::storage)?;
        let records = read_log(&mut file)?;

        let plan = &inputs.plan;
        let by_id: HashMap<String, usize> = plan
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.task_id.clone(), i))
            .collect();
        let doc_pos: HashMap<&str, usize> = plan
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.as_str(), i))
            .collect();
        let sys_pos: HashMap<&str, usize> = plan
            .systems
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let mut queue: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in plan.tasks.iter().enumerate() {
            queue.entry(t.rater_id.clone()).or_default().push(i);
        }
        for list in queue.values_mut() {
            list.sort_by_key(|&i| {
                let t = &plan.tasks[i];
                (
                    t.stage == Stage::ReAnnotation,
                    doc_pos.get(t.doc_id.as_str()).copied(),
                    sys_pos.get(t.system_id.as_str()).copied(),
                    i,
                )
            });
        }
        let initial = inputs
            .auto_annotations
            .iter()
            .map(|a| ((a.item(), a.rater_id.clone()), a.errors.clone()))
            .collect();
        let tasks = plan
            .tasks
            .iter()
            .map(|_| TaskState {
                status: TaskStatus::Open,
                prior_source: None,
                prior: BTreeMap::new(),
                current: BTreeMap::new(),
                active: BTreeMap::new(),
                visited: BTreeSet::new(),
                events: 0,
            })
            .collect();
        let mut state = State {
            inputs,
            cfg,
            by_id,
            queue,
            tasks,
            initial,
            events: Vec::new(),
            last_timestamp: 0,
            qc: None,
            log: file,
        };
        for record in records {
            state.apply(record)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            state: Mutex::new(state),
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.path
    }

    fn with<T>(&self, f: impl FnOnce(&mut State) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let mut state = self.state.lock().map_err(ServiceError::storage)?;
        f(&mut state)
    }

    pub fn next_task(&self, rater: &str) -> Result<NextTask, ServiceError> {
        self.with(|s| s.next_task(rater))
    }

    pub fn get_task(&self, rater: &str, task_id: &str) -> Result<TaskPayload, ServiceError> {
        self.with(|s| {
            let i = s.owned(rater, task_id)?;
            Ok(s.payload(i))
        })
    }

    pub fn post_event(&self, rater: &str, task_id: &str, req: EventRequest) -> Result<Ack, ServiceError> {
        self.with(|s| s.post_event(rater, task_id, req))
    }

    pub fn heartbeat(&self, rater: &str, task_id: &str, segment_index: usize, seconds: f64) -> Result<f64, ServiceError> {
        self.with(|s| {
            let i = s.in_progress(rater, task_id)?;
            s.check_segment(i, segment_index)?;
            let seconds = if seconds.is_finite() {
                seconds.clamp(0.0, s.cfg.heartbeat_max_seconds)
            } else {
                0.0
            };
            s.commit(LogRecord::Heartbeat {
                task_id: task_id.to_string(),
                segment_index,
                seconds,
            })?;
            Ok(s.tasks[i].active[&segment_index])
        })
    }

    pub fn submit(&self, rater: &str, task_id: &str, visited: &[usize]) -> Result<Vec<SegmentAnnotation>, ServiceError> {
        self.with(|s| s.submit(rater, task_id, visited))
    }

    /// Automatic initial annotations followed by every submitted task's
    /// annotations with full provenance, in plan order.
    pub fn export_annotations(&self) -> Result<Vec<SegmentAnnotation>, ServiceError> {
        self.with(|s| Ok(s.export()))
    }

    pub fn export_events(&self) -> Result<Vec<EditEvent>, ServiceError> {
        self.with(|s| Ok(s.events.clone()))
    }

    pub fn qc_state(&self) -> Result<Option<QcState>, ServiceError> {
        self.with(|s| Ok(s.qc.clone()))
    }

    pub fn snapshot(&self) -> Result<ServiceSnapshot, ServiceError> {
        self.with(|s| {
            let plan = &s.inputs.plan;
            Ok(ServiceSnapshot {
                statuses: plan
                    .tasks
                    .iter()
                    .zip(&s.tasks)
                    .map(|(t, st)| (t.task_id.clone(), st.status))
                    .collect(),
                current: plan
                    .tasks
                    .iter()
                    .zip(&s.tasks)
                    .filter(|(_, st)| st.status != TaskStatus::Open)
                    .map(|(t, st)| (t.task_id.clone(), st.current.clone()))
                    .collect(),
                annotations: s.export(),
                events: s.events.clone(),
            })
        })
    }

    /// Serialized payloads of every claimed task, as sent to raters.
    pub fn all_payload_bytes(&self) -> Result<Vec<Vec<u8>>, ServiceError> {
        self.with(|s| {
            Ok((0..s.tasks.len())
                .filter(|&i| s.tasks[i].status != TaskStatus::Open)
                .map(|i| serde_json::to_vec(&s.payload(i)).expect("payload serializes"))
                .collect())
        })
    }
}

/// Parse the log, dropping (and truncating away) a torn final line.
fn read_log(file: &mut File) -> Result<Vec<LogRecord>, ServiceError> {
    file.seek(SeekFrom::Start(0)).map_err(ServiceError::storage)?;
    let mut reader = BufReader::new(&*file);
    let mut records = Vec::new();
    let mut good = 0u64;
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(ServiceError::storage)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if buf.last() != Some(&b'\n') {
            // torn write: never acknowledged
            break;
        }
        let record = serde_json::from_slice::<LogRecord>(&buf).map_err(|e| ServiceError::Storage {
            message: format!("log line {line_no}: {e}"),
        })?;
        records.push(record);
        good += n as u64;
    }
    drop(reader);
    let len = file.metadata().map_err(ServiceError::storage)?.len();
    if len != good {
        file.set_len(good).map_err(ServiceError::storage)?;
    }
    file.seek(SeekFrom::End(0)).map_err(ServiceError::storage)?;
    Ok(records)
}

impl State {
    fn task(&self, i: usize) -> &PlannedTask {
        &self.inputs.plan.tasks[i]
    }

    fn index(&self, task_id: &str) -> Result<usize, ServiceError> {
        self.by_id
            .get(task_id)
            .copied()
            .ok_or_else(|| ServiceError::UnknownTask {
                task_id: task_id.to_string(),
            })
    }

    fn owned(&self, rater: &str, task_id: &str) -> Result<usize, ServiceError> {
        if !self.queue.contains_key(rater) {
            return Err(ServiceError::UnknownRater {
                rater: rater.to_string(),
            });
        }
        let i = self.index(task_id)?;
        if self.task(i).rater_id != rater {
            return Err(ServiceError::NotOwner {
                task_id: task_id.to_string(),
            });
        }
        Ok(i)
    }

    fn in_progress(&self, rater: &str, task_id: &str) -> Result<usize, ServiceError> {
        let i = self.owned(rater, task_id)?;
        match self.tasks[i].status {
            TaskStatus::InProgress => Ok(i),
            status => Err(ServiceError::NotInProgress {
                task_id: task_id.to_string(),
                status,
            }),
        }
    }

    fn check_segment(&self, i: usize, segment_index: usize) -> Result<(), ServiceError> {
        if self.tasks[i].current.contains_key(&segment_index) {
            Ok(())
        } else {
            Err(ServiceError::UnknownSegment { segment_index })
        }
    }

    fn qc_doc(&self) -> Option<&str> {
        self.cfg.qc.as_ref().map(|q| q.doc_id.as_str())
    }

    fn retired(&self, i: usize) -> bool {
        is_retired_qc_task(self.task(i), self.qc_doc())
    }

    fn segments(&self, doc_id: &str) -> Vec<usize> {
        self.inputs
            .corpus
            .document_segments(doc_id)
            .map(|s| s.segment_index)
            .collect()
    }

    fn initial_ready(&self, doc_id: &str, system_id: &str, annotator: &str) -> bool {
        self.segments(doc_id).iter().all(|&seg| {
            self.initial
                .contains_key(&(ItemKey::new(doc_id, seg, system_id), annotator.to_string()))
        })
    }

    fn ready(&self, i: usize) -> bool {
        let t = self.task(i);
        if t.stage == Stage::Initial {
            return true;
        }
        if self.qc_doc() == Some(t.doc_id.as_str()) {
            return self.qc.is_some()
                || self
                    .inputs
                    .plan
                    .tasks
                    .iter()
                    .zip(&self.tasks)
                    .filter(|(o, _)| o.doc_id == t.doc_id && o.stage == Stage::Initial)
                    .all(|(_, st)| st.status == TaskStatus::Submitted);
        }
        match &t.prior_source {
            Some(p) => self.initial_ready(&t.doc_id, &t.system_id, p.id()),
            None => false,
        }
    }

    fn next_task(&mut self, rater: &str) -> Result<NextTask, ServiceError> {
        let queue = self
            .queue
            .get(rater)
            .ok_or_else(|| ServiceError::UnknownRater {
                rater: rater.to_string(),
            })?
            .clone();
        if let Some(&i) = queue.iter().find(|&&i| self.tasks[i].status == TaskStatus::InProgress) {
            return Ok(NextTask::Task(self.payload(i)));
        }
        let open: Vec<usize> = queue
            .iter()
            .copied()
            .filter(|&i| self.tasks[i].status == TaskStatus::Open && !self.retired(i))
            .collect();
        if open.is_empty() {
            return Ok(NextTask::Done);
        }
        let Some(&i) = open.iter().find(|&&i| self.ready(i)) else {
            return Ok(NextTask::Waiting {
                remaining: open.len(),
            });
        };
        self.ensure_qc(i)?;
        let (prior_source, prior) = self.prior_for(i)?;
        self.commit(LogRecord::Claim {
            task_id: self.task(i).task_id.clone(),
            prior_source,
            prior,
        })?;
        Ok(NextTask::Task(self.payload(i)))
    }

    /// Run the injection once every initial task of the control document is in.
    fn ensure_qc(&mut self, i: usize) -> Result<(), ServiceError> {
        let t = self.task(i);
        let Some(setup) = self.cfg.qc.clone() else {
            return Ok(());
        };
        if self.qc.is_some() || t.stage != Stage::ReAnnotation || t.doc_id != setup.doc_id {
            return Ok(());
        }
        let assignment = self
            .inputs
            .plan
            .document(&setup.doc_id)
            .ok_or_else(|| ServiceError::BadRequest {
                message: format!("control document `{}` is not in the plan", setup.doc_id),
            })?;
        let humans: Vec<SegmentAnnotation> = self
            .initial
            .iter()
            .filter(|((item, rater), _)| item.doc_id == setup.doc_id && assignment.raters.contains(rater))
            .map(|((item, rater), errors)| SegmentAnnotation::initial(item, rater, errors.clone()))
            .collect();
        let systems: Vec<String> = self.inputs.plan.systems.iter().map(|s| s.id.clone()).collect();
        let mut cfg = InjectionConfig::new(&setup.doc_id, setup.seed);
        cfg.tokenizer = setup.tokenizer;
        let outcome = inject_document(
            &self.inputs.corpus,
            assignment,
            &systems,
            &humans,
            &cfg,
            &self.inputs.registry,
        )
        .map_err(ServiceError::storage)?;
        self.commit(LogRecord::QcPrior {
            densest_rater: outcome.densest_rater,
            prior: outcome.prior,
            log: outcome.log,
        })
    }

    fn prior_for(&self, i: usize) -> Result<(Option<PriorSource>, Vec<SegmentPrior>), ServiceError> {
        let t = self.task(i);
        let segments = self.segments(&t.doc_id);
        if t.stage == Stage::Initial {
            let prior = segments
                .into_iter()
                .map(|segment_index| SegmentPrior {
                    segment_index,
                    errors: Vec::new(),
                })
                .collect();
            return Ok((None, prior));
        }
        if let (Some(qc), true) = (&self.qc, self.qc_doc() == Some(t.doc_id.as_str())) {
            let prior = segments
                .into_iter()
                .map(|segment_index| SegmentPrior {
                    segment_index,
                    errors: qc
                        .prior
                        .iter()
                        .find(|a| a.segment_index == segment_index && a.system_id == t.system_id)
                        .map(|a| a.errors.clone())
                        .unwrap_or_default(),
                })
                .collect();
            let source = PriorSource::Human {
                rater: qc.densest_rater.clone(),
            };
            return Ok((Some(source), prior));
        }
        let source = t.prior_source.clone().ok_or_else(|| ServiceError::BadRequest {
            message: format!("task `{}` has no prior source", t.task_id),
        })?;
        let prior = segments
            .into_iter()
            .map(|segment_index| {
                let key = (ItemKey::new(&t.doc_id, segment_index, &t.system_id), source.id().to_string());
                SegmentPrior {
                    segment_index,
                    errors: self.initial.get(&key).cloned().unwrap_or_default(),
                }
            })
            .collect();
        Ok((Some(source), prior))
    }

    fn payload(&self, i: usize) -> TaskPayload {
        let t = self.task(i);
        let st = &self.tasks[i];
        let corpus = &self.inputs.corpus;
        let segments = st
            .current
            .iter()
            .map(|(&segment_index, errors)| {
                let seg = corpus.segment(&t.doc_id, segment_index).expect("segment in corpus");
                let mut errors: Vec<ErrorView> = errors.iter().map(view).collect();
                errors.sort_by(|a, b| {
                    (a.side == Side::Target, a.start, a.end, &a.id).cmp(&(b.side == Side::Target, b.start, b.end, &b.id))
                });
                SegmentView {
                    segment_index,
                    source_text: seg.source_text.clone(),
                    target_text: seg.text(Side::Target, &t.system_id).unwrap_or("").to_string(),
                    errors,
                }
            })
            .collect();
        TaskPayload {
            task_id: t.task_id.clone(),
            doc_id: t.doc_id.clone(),
            system_id: t.system_id.clone(),
            status: st.status,
            segments,
        }
    }

    fn post_event(&mut self, rater: &str, task_id: &str, req: EventRequest) -> Result<Ack, ServiceError> {
        let i = self.in_progress(rater, task_id)?;
        self.check_segment(i, req.segment_index)?;
        let st = &self.tasks[i];
        let current = &st.current[&req.segment_index];
        let error_id = match req.kind {
            EditKind::Add => opaque_id(&["svc", task_id, &st.events.to_string()]),
            _ => req.error_id.clone().ok_or_else(|| ServiceError::BadRequest {
                message: "modify and delete need an error_id".into(),
            })?,
        };
        let payload = match (req.kind, req.payload) {
            (EditKind::Delete, _) => None,
            (_, None) => return Err(ServiceError::rejected(ReplayFault::MissingPayload)),
            (kind, Some(v)) => {
                // injected flags never come from the client
                let injected = kind == EditKind::Modify
                    && current.iter().any(|e| e.id == error_id && e.injected);
                let mut e = ErrorAnnotation::new(error_id.clone(), v.side, v.start, v.end, v.category, v.severity);
                e.injected = injected;
                Some(e)
            }
        };
        let event = EditEvent {
            task_id: task_id.to_string(),
            segment_index: req.segment_index,
            timestamp: now_ms().max(self.last_timestamp),
            kind: req.kind,
            error_id: error_id.clone(),
            payload,
        };
        let mut probe = current.clone();
        apply_event(&mut probe, &event).map_err(ServiceError::rejected)?;
        let seq = st.events;
        let timestamp = event.timestamp;
        self.commit(LogRecord::Event { event })?;
        Ok(Ack {
            task_id: task_id.to_string(),
            seq,
            timestamp,
            error_id,
        })
    }

    fn finals(&self, i: usize) -> Vec<SegmentAnnotation> {
        let t = self.task(i);
        let st = &self.tasks[i];
        st.current
            .iter()
            .map(|(&segment_index, errors)| SegmentAnnotation {
                doc_id: t.doc_id.clone(),
                segment_index,
                system_id: t.system_id.clone(),
                rater_id: t.rater_id.clone(),
                stage: t.stage,
                prior_source: st.prior_source.clone(),
                errors: errors.clone(),
                active_seconds: st.active.get(&segment_index).copied().unwrap_or(0.0),
            })
            .collect()
    }

    fn submit(&mut self, rater: &str, task_id: &str, visited: &[usize]) -> Result<Vec<SegmentAnnotation>, ServiceError> {
        let i = self.in_progress(rater, task_id)?;
        let st = &self.tasks[i];
        let seen: BTreeSet<usize> = st.visited.iter().chain(visited).copied().collect();
        let missing: Vec<usize> = st.current.keys().copied().filter(|s| !seen.contains(s)).collect();
        if !missing.is_empty() {
            return Err(ServiceError::Unvisited { missing });
        }
        let finals = self.finals(i);
        let mut bad = Vec::new();
        for a in &finals {
            let seg = self
                .inputs
                .corpus
                .segment(&a.doc_id, a.segment_index)
                .expect("segment in corpus");
            let violations = validate_annotation(a, seg, &self.inputs.registry);
            if !violations.is_empty() {
                bad.push(SegmentViolations {
                    segment_index: a.segment_index,
                    violations,
                });
            }
        }
        if !bad.is_empty() {
            return Err(ServiceError::Invalid { segments: bad });
        }
        self.commit(LogRecord::Submit {
            task_id: task_id.to_string(),
            visited: visited.to_vec(),
        })?;
        Ok(finals)
    }

    fn export(&self) -> Vec<SegmentAnnotation> {
        let mut out = self.inputs.auto_annotations.clone();
        for (i, st) in self.tasks.iter().enumerate() {
            if st.status == TaskStatus::Submitted {
                out.extend(self.finals(i));
            }
        }
        out
    }

    /// Persist `record`, then apply it.
    fn commit(&mut self, record: LogRecord) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(&record).map_err(ServiceError::storage)?;
        line.push(b'\n');
        self.log
            .write_all(&line)
            .and_then(|_| self.log.sync_data())
            .map_err(ServiceError::storage)?;
        self.apply(record)
    }

    fn apply(&mut self, record: LogRecord) -> Result<(), ServiceError> {
        match record {
            LogRecord::Claim {
                task_id,
                prior_source,
                prior,
            } => {
                let i = self.index(&task_id)?;
                let st = &mut self.tasks[i];
                st.status = TaskStatus::InProgress;
                st.prior_source = prior_source;
                st.prior = prior.into_iter().map(|p| (p.segment_index, p.errors)).collect();
                st.current = st.prior.clone();
                st.active = st.prior.keys().map(|&k| (k, 0.0)).collect();
            }
            LogRecord::Event { event } => {
                let i = self.index(&event.task_id)?;
                let st = &mut self.tasks[i];
                let errors = st
                    .current
                    .get_mut(&event.segment_index)
                    .ok_or(ServiceError::UnknownSegment {
                        segment_index: event.segment_index,
                    })?;
                apply_event(errors, &event).map_err(ServiceError::rejected)?;
                st.events += 1;
                st.visited.insert(event.segment_index);
                self.last_timestamp = self.last_timestamp.max(event.timestamp);
                self.events.push(event);
            }
            LogRecord::Heartbeat {
                task_id,
                segment_index,
                seconds,
            } => {
                let i = self.index(&task_id)?;
                let st = &mut self.tasks[i];
                *st.active.entry(segment_index).or_insert(0.0) += seconds;
                st.visited.insert(segment_index);
            }
            LogRecord::Submit { task_id, visited } => {
                let i = self.index(&task_id)?;
                self.tasks[i].visited.extend(visited);
                self.tasks[i].status = TaskStatus::Submitted;
                let t = self.task(i).clone();
                if t.stage == Stage::Initial {
                    for (seg, errors) in self.tasks[i].current.clone() {
                        self.initial
                            .insert((ItemKey::new(&t.doc_id, seg, &t.system_id), t.rater_id.clone()), errors);
                    }
                }
            }
            LogRecord::QcPrior {
                densest_rater,
                prior,
                log,
            } => {
                self.qc = Some(QcState {
                    densest_rater,
                    prior,
                    log,
                });
            }
        }
        Ok(())
    }
}
