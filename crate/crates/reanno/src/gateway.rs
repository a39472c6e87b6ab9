//! Automatic MQM annotators behind one interface.
//!
//! A `stub` annotator marks configured tokens and is fully deterministic.
//! A `remote` annotator is any process listening on a TCP socket that
//! answers one JSON request line with one JSON response line:
//!
//! ```text
//! -> {"source": "...", "target": "...", "language_pair": "zh-en"}
//! <- {"errors": [{"side": "target", "start": 0, "end": 3, "category": "Fluency/Spelling", "severity": "minor"}]}
//! ```
//!
//! Responses are repaired (clamped or dropped), validated and cached per
//! `(annotator, source, target)`; concurrent requests for one key are
//! issued once.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mqm_reanno_core::id::opaque_id;
use mqm_reanno_core::qc::{tokenize, Tokenizer};
use mqm_reanno_core::{
    validate_annotation, Category, CategoryRegistry, Corpus, ErrorAnnotation, ItemKey, Segment,
    SegmentAnnotation, Severity, Side, Violation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorKind {
    Stub,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairPolicy {
    /// Cut out-of-range spans to the text length; drop them if nothing is left.
    #[default]
    Clamp,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    /// Whitespace token to mark, compared case-insensitively.
    pub token: String,
    #[serde(default = "default_side")]
    pub side: Side,
    pub category: Category,
    pub severity: Severity,
}

fn default_side() -> Side {
    Side::Target
}

fn default_timeout() -> u64 {
    5_000
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoAnnotatorDescriptor {
    pub id: String,
    pub kind: AnnotatorKind,
    /// `host:port` of a remote annotator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub repair: RepairPolicy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stub_rules: Vec<StubRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_pair: Option<String>,
}

impl AutoAnnotatorDescriptor {
    pub fn stub(id: &str, rules: Vec<StubRule>) -> Self {
        Self {
            id: id.to_string(),
            kind: AnnotatorKind::Stub,
            endpoint: None,
            timeout_ms: default_timeout(),
            max_retries: default_retries(),
            repair: RepairPolicy::Clamp,
            stub_rules: rules,
            language_pair: None,
        }
    }

    pub fn remote(id: &str, endpoint: &str) -> Self {
        Self {
            kind: AnnotatorKind::Remote,
            endpoint: Some(endpoint.to_string()),
            ..Self::stub(id, Vec::new())
        }
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if self.kind == AnnotatorKind::Remote && self.endpoint.is_none() {
            return Err(GatewayError::Config(format!(
                "remote annotator `{}` needs an endpoint",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("{0}")]
    Config(String),
    #[error("source and target must be nonempty")]
    EmptyText,
    /// The annotator could not be reached; the item stays pending.
    #[error("annotator `{annotator}` unavailable after {attempts} attempts: {last_error}")]
    PendingAuto {
        annotator: String,
        attempts: u32,
        last_error: String,
    },
    #[error("annotator `{annotator}` produced invalid annotations: {violations:?}")]
    Invalid {
        annotator: String,
        violations: Vec<Violation>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub source: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_pair: Option<String>,
}

/// An error as a remote annotator reports it; the category is unchecked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSpan {
    pub side: Side,
    pub start: usize,
    pub end: usize,
    pub category: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateResponse {
    #[serde(default)]
    pub errors: Vec<RawSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairAction {
    Clamped,
    Dropped,
}

/// One repaired or rejected span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairEntry {
    pub annotator: String,
    pub key: String,
    pub span: RawSpan,
    pub reason: String,
    pub action: RepairAction,
}

/// Turn raw spans into valid errors under `policy`, logging every repair.
#[allow(clippy::too_many_arguments)]
pub fn repair_spans(
    raw: &[RawSpan],
    source: &str,
    target: &str,
    policy: RepairPolicy,
    registry: &CategoryRegistry,
    annotator: &str,
    key: &str,
    log: &mut Vec<RepairEntry>,
) -> Vec<ErrorAnnotation> {
    let source_len = source.chars().count();
    let target_len = target.chars().count();
    let mut out = Vec::new();
    for (n, span) in raw.iter().enumerate() {
        let mut entry = |reason: String, action| {
            log.push(RepairEntry {
                annotator: annotator.to_string(),
                key: key.to_string(),
                span: span.clone(),
                reason,
                action,
            })
        };
        let category = match registry.parse(&span.category) {
            Ok(c) => c,
            Err(_) => {
                entry(format!("unknown category `{}`", span.category), RepairAction::Dropped);
                continue;
            }
        };
        let len = match span.side {
            Side::Source => source_len,
            Side::Target => target_len,
        };
        let (mut start, mut end) = (span.start, span.end);
        if end > len || start >= end {
            let reason = format!("span [{start},{end}) outside text of {len} chars");
            match policy {
                RepairPolicy::Clamp => {
                    start = start.min(len);
                    end = end.min(len);
                    if start >= end {
                        entry(reason, RepairAction::Dropped);
                        continue;
                    }
                    entry(reason, RepairAction::Clamped);
                }
                RepairPolicy::Drop => {
                    entry(reason, RepairAction::Dropped);
                    continue;
                }
            }
        }
        let id = opaque_id(&["auto", annotator, key, &n.to_string()]);
        out.push(ErrorAnnotation::new(id, span.side, start, end, category, span.severity));
    }
    out
}

/// Spans a stub would report for `source`/`target`.
pub fn stub_spans(rules: &[StubRule], source: &str, target: &str) -> Vec<RawSpan> {
    let mut out = Vec::new();
    for (side, text) in [(Side::Source, source), (Side::Target, target)] {
        let chars: Vec<char> = text.chars().collect();
        for (start, end) in tokenize(text, Tokenizer::Whitespace) {
            let token: String = chars[start..end].iter().collect::<String>().to_lowercase();
            for rule in rules.iter().filter(|r| r.side == side) {
                if token == rule.token.to_lowercase() {
                    out.push(RawSpan {
                        side,
                        start,
                        end,
                        category: rule.category.to_string(),
                        severity: rule.severity,
                    });
                }
            }
        }
    }
    out
}

fn remote_call(endpoint: &str, timeout: Duration, request: &AnnotateRequest) -> Result<Vec<RawSpan>, String> {
    let addr = endpoint
        .to_socket_addrs()
        .map_err(|e| e.to_string())?
        .next()
        .ok_or_else(|| format!("cannot resolve `{endpoint}`"))?;
    let mut stream = TcpStream::connect_timeout(&addr, timeout).map_err(|e| e.to_string())?;
    stream.set_read_timeout(Some(timeout)).map_err(|e| e.to_string())?;
    stream.set_write_timeout(Some(timeout)).map_err(|e| e.to_string())?;
    let mut line = serde_json::to_vec(request).map_err(|e| e.to_string())?;
    line.push(b'\n');
    stream.write_all(&line).map_err(|e| e.to_string())?;
    let mut response = String::new();
    BufReader::new(stream)
        .read_line(&mut response)
        .map_err(|e| e.to_string())?;
    if response.trim().is_empty() {
        return Err("empty response".into());
    }
    let parsed: AnnotateResponse = serde_json::from_str(&response).map_err(|e| e.to_string())?;
    match parsed.error {
        Some(e) => Err(e),
        None => Ok(parsed.errors),
    }
}

fn cache_key(annotator: &str, source: &str, target: &str) -> String {
    let mut h = Sha256::new();
    for part in [annotator, source, target] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

type Slot = Arc<Mutex<Option<Arc<[u8]>>>>;

/// One automatic annotator with its response cache.
pub struct Gateway {
    descriptor: AutoAnnotatorDescriptor,
    registry: CategoryRegistry,
    cache_dir: Option<PathBuf>,
    slots: Mutex<HashMap<String, Slot>>,
    repairs: Mutex<Vec<RepairEntry>>,
    calls: Mutex<u64>,
}

impl Gateway {
    pub fn new(
        descriptor: AutoAnnotatorDescriptor,
        registry: CategoryRegistry,
        cache_dir: Option<PathBuf>,
    ) -> Result<Self, GatewayError> {
        descriptor.check()?;
        if let Some(dir) = &cache_dir {
            fs::create_dir_all(dir).map_err(|e| GatewayError::Config(format!("{}: {e}", dir.display())))?;
        }
        Ok(Self {
            descriptor,
            registry,
            cache_dir,
            slots: Mutex::new(HashMap::new()),
            repairs: Mutex::new(Vec::new()),
            calls: Mutex::new(0),
        })
    }

    pub fn descriptor(&self) -> &AutoAnnotatorDescriptor {
        &self.descriptor
    }

    pub fn repair_log(&self) -> Vec<RepairEntry> {
        self.repairs.lock().expect("repair log").clone()
    }

    /// Requests that actually reached the backend (cache misses).
    pub fn backend_calls(&self) -> u64 {
        *self.calls.lock().expect("call counter")
    }

    fn fetch(&self, source: &str, target: &str) -> Result<Vec<RawSpan>, GatewayError> {
        *self.calls.lock().expect("call counter") += 1;
        let d = &self.descriptor;
        match d.kind {
            AnnotatorKind::Stub => Ok(stub_spans(&d.stub_rules, source, target)),
            AnnotatorKind::Remote => {
                let endpoint = d.endpoint.as_deref().expect("checked");
                let request = AnnotateRequest {
                    source: source.to_string(),
                    target: target.to_string(),
                    language_pair: d.language_pair.clone(),
                };
                let timeout = Duration::from_millis(d.timeout_ms.max(1));
                let attempts = d.max_retries + 1;
                let mut last_error = String::new();
                for _ in 0..attempts {
                    match remote_call(endpoint, timeout, &request) {
                        Ok(spans) => return Ok(spans),
                        Err(e) => last_error = e,
                    }
                }
                Err(GatewayError::PendingAuto {
                    annotator: d.id.clone(),
                    attempts,
                    last_error,
                })
            }
        }
    }

    fn compute(&self, key: &str, source: &str, target: &str) -> Result<Vec<ErrorAnnotation>, GatewayError> {
        let raw = self.fetch(source, target)?;
        let mut log = Vec::new();
        let errors = repair_spans(
            &raw,
            source,
            target,
            self.descriptor.repair,
            &self.registry,
            &self.descriptor.id,
            key,
            &mut log,
        );
        self.repairs.lock().expect("repair log").extend(log);
        // validate against a one-off segment before anything is stored
        let segment = Segment {
            doc_id: String::new(),
            segment_index: 0,
            source_text: source.to_string(),
            targets: [(String::new(), target.to_string())].into_iter().collect(),
        };
        let probe = SegmentAnnotation::initial(&ItemKey::new("", 0, ""), &self.descriptor.id, errors);
        let violations = validate_annotation(&probe, &segment, &self.registry);
        if !violations.is_empty() {
            return Err(GatewayError::Invalid {
                annotator: self.descriptor.id.clone(),
                violations,
            });
        }
        Ok(probe.errors)
    }

    /// Serialized errors for one input, from memory, disk or the backend.
    pub fn annotate_bytes(&self, source: &str, target: &str) -> Result<Arc<[u8]>, GatewayError> {
        if source.is_empty() || target.is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let key = cache_key(&self.descriptor.id, source, target);
        let slot = self
            .slots
            .lock()
            .expect("cache index")
            .entry(key.clone())
            .or_default()
            .clone();
        // holding the per-key lock makes concurrent callers wait for one fetch
        let mut slot = slot.lock().expect("cache slot");
        if let Some(bytes) = slot.as_ref() {
            return Ok(bytes.clone());
        }
        let path = self.cache_dir.as_ref().map(|d| d.join(format!("{key}.json")));
        if let Some(bytes) = path.as_ref().and_then(|p| fs::read(p).ok()) {
            if serde_json::from_slice::<Vec<ErrorAnnotation>>(&bytes).is_ok() {
                let bytes: Arc<[u8]> = bytes.into();
                *slot = Some(bytes.clone());
                return Ok(bytes);
            }
        }
        let errors = self.compute(&key, source, target)?;
        let bytes: Arc<[u8]> = serde_json::to_vec(&errors).expect("errors serialize").into();
        if let Some(p) = &path {
            let tmp = p.with_extension("tmp");
            if fs::write(&tmp, &bytes).is_ok() {
                let _ = fs::rename(&tmp, p);
            }
        }
        *slot = Some(bytes.clone());
        Ok(bytes)
    }

    pub fn annotate(&self, source: &str, target: &str) -> Result<Vec<ErrorAnnotation>, GatewayError> {
        let bytes = self.annotate_bytes(source, target)?;
        Ok(serde_json::from_slice(&bytes).expect("cached errors parse"))
    }

    /// Initial annotation of one item, stored under the annotator's id.
    pub fn annotate_item(&self, segment: &Segment, system_id: &str) -> Result<SegmentAnnotation, GatewayError> {
        let target = segment.text(Side::Target, system_id).unwrap_or("");
        let errors = self.annotate(&segment.source_text, target)?;
        let item = ItemKey::new(&segment.doc_id, segment.segment_index, system_id);
        let a = SegmentAnnotation::initial(&item, &self.descriptor.id, errors);
        let violations = validate_annotation(&a, segment, &self.registry);
        if !violations.is_empty() {
            return Err(GatewayError::Invalid {
                annotator: self.descriptor.id.clone(),
                violations,
            });
        }
        Ok(a)
    }

    /// Annotate every segment of every listed system in parallel. Items the
    /// annotator could not serve are returned separately, never as empty
    /// annotations.
    pub fn annotate_corpus(
        &self,
        corpus: &Corpus,
        systems: &[String],
    ) -> (Vec<SegmentAnnotation>, Vec<(ItemKey, GatewayError)>) {
        let jobs: Vec<(&Segment, &str)> = corpus
            .segments()
            .iter()
            .flat_map(|s| systems.iter().map(move |sys| (s, sys.as_str())))
            .collect();
        let results: Vec<_> = jobs
            .par_iter()
            .map(|(seg, sys)| {
                (
                    ItemKey::new(&seg.doc_id, seg.segment_index, sys),
                    self.annotate_item(seg, sys),
                )
            })
            .collect();
        let mut done = Vec::new();
        let mut pending = Vec::new();
        for (item, r) in results {
            match r {
                Ok(a) => done.push(a),
                Err(e) => pending.push((item, e)),
            }
        }
        (done, pending)
    }
}
