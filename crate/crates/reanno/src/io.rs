//! JSON Lines and TSV file formats.
//!
//! Writers emit the canonical form (one compact JSON object per line, fields
//! in declaration order, map keys sorted, `\n` line endings), so reading a
//! canonical file and writing it back reproduces it byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mqm_reanno_core::id::opaque_id;
use mqm_reanno_core::planner::{CampaignPlan, DocumentAssignment, PlannedTask, SystemSpec};
use mqm_reanno_core::{
    validate_annotation, AnnotationKey, CategoryRegistry, Corpus, EditEvent, ErrorAnnotation,
    ItemKey, Segment, SegmentAnnotation, Severity, Side,
};

use crate::error::{Error, Result};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Parse JSON Lines from `reader`; blank lines are skipped. Each value is
/// paired with its 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead, origin: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            origin: origin.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            origin: origin.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, value));
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    mut writer: impl Write,
    values: impl IntoIterator<Item = &'a T>,
) -> std::io::Result<()> {
    for v in values {
        serde_json::to_writer(&mut writer, v)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn to_jsonl_string<'a, T: Serialize + 'a>(values: impl IntoIterator<Item = &'a T>) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, values).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

fn write_file<'a, T: Serialize + 'a>(path: &Path, values: impl IntoIterator<Item = &'a T>) -> Result<()> {
    write_jsonl(create(path)?, values).map_err(|e| Error::io(path, e))
}

fn origin_of(path: &Path) -> String {
    path.display().to_string()
}

pub fn parse_corpus(reader: impl BufRead, origin: &str) -> Result<Corpus> {
    let rows: Vec<(usize, Segment)> = read_jsonl(reader, origin)?;
    let mut seen = BTreeSet::new();
    for (line, s) in &rows {
        if !seen.insert((s.doc_id.clone(), s.segment_index)) {
            return Err(Error::DuplicateKey {
                origin: origin.to_string(),
                line: *line,
                key: format!("{}:{}", s.doc_id, s.segment_index),
            });
        }
    }
    Ok(Corpus::new(rows.into_iter().map(|(_, s)| s).collect())?)
}

pub fn import_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(open(path)?, &origin_of(path))
}

pub fn export_corpus(corpus: &Corpus, writer: impl Write) -> std::io::Result<()> {
    write_jsonl(writer, corpus.segments())
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    write_file(path, corpus.segments())
}

/// What imported annotations are checked against.
#[derive(Clone, Copy, Default)]
pub struct Checks<'a> {
    pub corpus: Option<&'a Corpus>,
    pub registry: Option<&'a CategoryRegistry>,
}

pub fn parse_annotations(
    reader: impl BufRead,
    origin: &str,
    checks: Checks<'_>,
) -> Result<Vec<SegmentAnnotation>> {
    let rows: Vec<(usize, SegmentAnnotation)> = read_jsonl(reader, origin)?;
    let default_registry;
    let registry = match checks.registry {
        Some(r) => r,
        None => {
            default_registry = CategoryRegistry::mqm_default();
            &default_registry
        }
    };
    let mut keys: BTreeSet<AnnotationKey> = BTreeSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, a) in rows {
        if !keys.insert(a.key()) {
            return Err(Error::DuplicateKey {
                origin: origin.to_string(),
                line,
                key: a.key().to_string(),
            });
        }
        if let Some(corpus) = checks.corpus {
            let violations = match corpus.segment(&a.doc_id, a.segment_index) {
                Some(seg) => validate_annotation(&a, seg, registry),
                None => vec![mqm_reanno_core::Violation::SegmentMismatch {
                    doc_id: a.doc_id.clone(),
                    segment_index: a.segment_index,
                }],
            };
            if !violations.is_empty() {
                return Err(Error::Invalid {
                    origin: origin.to_string(),
                    line,
                    violations,
                });
            }
        }
        out.push(a);
    }
    Ok(out)
}

pub fn import_annotations(path: &Path, checks: Checks<'_>) -> Result<Vec<SegmentAnnotation>> {
    parse_annotations(open(path)?, &origin_of(path), checks)
}

pub fn export_annotations(annotations: &[SegmentAnnotation], writer: impl Write) -> std::io::Result<()> {
    write_jsonl(writer, annotations)
}

pub fn save_annotations(path: &Path, annotations: &[SegmentAnnotation]) -> Result<()> {
    write_file(path, annotations)
}

pub fn import_events(path: &Path) -> Result<Vec<EditEvent>> {
    let rows: Vec<(usize, EditEvent)> = read_jsonl(open(path)?, &origin_of(path))?;
    Ok(rows.into_iter().map(|(_, e)| e).collect())
}

pub fn save_events(path: &Path, events: &[EditEvent]) -> Result<()> {
    write_file(path, events)
}

/// Append one event to an event-log file and sync it to disk.
pub fn append_event(path: &Path, event: &EditEvent) -> Result<()> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_vec(event).expect("event serializes");
    line.push(b'\n');
    file.write_all(&line)
        .and_then(|_| file.sync_data())
        .map_err(|e| Error::io(path, e))
}

/// One row per error: doc, segment, system, rater, side, start, end,
/// category, severity. A leading header row starting with `doc` is
/// skipped. Rows are grouped into initial annotations; ids are derived from
/// the row position.
pub fn parse_tsv(reader: impl Read, origin: &str, registry: &CategoryRegistry) -> Result<Vec<SegmentAnnotation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quoting(false)
        .from_reader(reader);
    let mut groups: BTreeMap<(ItemKey, String), Vec<ErrorAnnotation>> = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let bad = |message: String| Error::Parse {
            origin: origin.to_string(),
            line,
            message,
        };
        let record = record.map_err(|e| bad(e.to_string()))?;
        if line == 1 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("doc")) {
            continue;
        }
        if record.len() != 9 {
            return Err(bad(format!("expected 9 fields, found {}", record.len())));
        }
        let f = |k: usize| record[k].trim();
        let number = |k: usize, name: &str| {
            f(k).parse::<usize>()
                .map_err(|_| bad(format!("{name} `{}` is not a number", f(k))))
        };
        let segment_index = number(1, "segment")?;
        let start = number(5, "start")?;
        let end = number(6, "end")?;
        let side = match f(4).to_ascii_lowercase().as_str() {
            "source" => Side::Source,
            "target" => Side::Target,
            other => return Err(bad(format!("unknown side `{other}`"))),
        };
        let severity = match f(8).to_ascii_lowercase().as_str() {
            "major" => Severity::Major,
            "minor" => Severity::Minor,
            other => return Err(bad(format!("unknown severity `{other}`"))),
        };
        let category = registry.parse(f(7)).map_err(|e| bad(e.to_string()))?;
        let item = ItemKey::new(f(0), segment_index, f(2));
        let id = opaque_id(&["tsv", origin, &line.to_string()]);
        groups
            .entry((item, f(3).to_string()))
            .or_default()
            .push(ErrorAnnotation::new(id, side, start, end, category, severity));
    }
    Ok(groups
        .into_iter()
        .map(|((item, rater), errors)| SegmentAnnotation::initial(&item, &rater, errors))
        .collect())
}

pub fn import_tsv(path: &Path, registry: &CategoryRegistry) -> Result<Vec<SegmentAnnotation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(file, &origin_of(path), registry)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum PlanRecord {
    Header {
        seed: u64,
        raters_per_doc: usize,
        systems: Vec<SystemSpec>,
    },
    Document(DocumentAssignment),
    Task(PlannedTask),
}

/// Header line, one line per document assignment, then one per task.
pub fn write_plan(plan: &CampaignPlan, writer: impl Write) -> std::io::Result<()> {
    let mut records = vec![PlanRecord::Header {
        seed: plan.seed,
        raters_per_doc: plan.raters_per_doc,
        systems: plan.systems.clone(),
    }];
    records.extend(plan.documents.iter().cloned().map(PlanRecord::Document));
    records.extend(plan.tasks.iter().cloned().map(PlanRecord::Task));
    write_jsonl(writer, &records)
}

pub fn parse_plan(reader: impl BufRead, origin: &str) -> Result<CampaignPlan> {
    let rows: Vec<(usize, PlanRecord)> = read_jsonl(reader, origin)?;
    let mut iter = rows.into_iter();
    let Some((_, PlanRecord::Header { seed, raters_per_doc, systems })) = iter.next() else {
        return Err(Error::Parse {
            origin: origin.to_string(),
            line: 1,
            message: "plan must start with a header record".into(),
        });
    };
    let mut plan = CampaignPlan {
        seed,
        raters_per_doc,
        systems,
        documents: Vec::new(),
        tasks: Vec::new(),
    };
    for (line, record) in iter {
        match record {
            PlanRecord::Document(d) => plan.documents.push(d),
            PlanRecord::Task(t) => plan.tasks.push(t),
            PlanRecord::Header { .. } => {
                return Err(Error::Parse {
                    origin: origin.to_string(),
                    line,
                    message: "second header record".into(),
                })
            }
        }
    }
    Ok(plan)
}

pub fn load_plan(path: &Path) -> Result<CampaignPlan> {
    parse_plan(open(path)?, &origin_of(path))
}

pub fn save_plan(path: &Path, plan: &CampaignPlan) -> Result<()> {
    write_plan(plan, create(path)?).map_err(|e| Error::io(path, e))
}

/// A JSON config file.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        origin: origin_of(path),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(std::io::Error::from)
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn save_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    write_file(path, values)
}

pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let rows: Vec<(usize, T)> = read_jsonl(open(path)?, &origin_of(path))?;
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}
