use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use mqm_reanno::core::simulate::{simulate, toy_config};
use mqm_reanno::core::{validate_annotation, Category, CategoryRegistry, Severity, Side};
use mqm_reanno::gateway::{
    AnnotateRequest, AutoAnnotatorDescriptor, Gateway, GatewayError, RepairAction, RepairPolicy, StubRule,
};

fn teh_rule() -> StubRule {
    StubRule {
        token: "teh".into(),
        side: Side::Target,
        category: Category::leaf("Fluency", "Spelling"),
        severity: Severity::Minor,
    }
}

fn stub() -> Gateway {
    Gateway::new(
        AutoAnnotatorDescriptor::stub("stub", vec![teh_rule()]),
        CategoryRegistry::mqm_default(),
        None,
    )
    .unwrap()
}

/// Serve `responses` in turn (the last one repeats), one per connection.
fn fake_backend(responses: Vec<String>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let mut line = String::new();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            if reader.read_line(&mut line).is_err() {
                continue;
            }
            let _: AnnotateRequest = serde_json::from_str(&line).unwrap();
            let reply = &responses[n.min(responses.len() - 1)];
            let _ = stream.write_all(reply.as_bytes());
            let _ = stream.write_all(b"\n");
        }
    });
    (addr, hits)
}

#[test]
fn stub_marks_rule_tokens() {
    let g = stub();
    let errors = g.annotate("die Katze", "teh cat").unwrap();
    assert_eq!(errors.len(), 1);
    let e = &errors[0];
    assert_eq!((e.side, e.start, e.end), (Side::Target, 0, 3));
    assert_eq!(e.severity, Severity::Minor);
    assert_eq!(e.category, Category::leaf("Fluency", "Spelling"));
    assert!(!e.injected);
    assert!(g.annotate("die Katze", "the cat").unwrap().is_empty());
}

#[test]
fn stub_is_deterministic_across_instances() {
    let a = stub().annotate("x", "teh cat and teh dog").unwrap();
    let b = stub().annotate("x", "teh cat and teh dog").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2);
    assert_ne!(a[0].id, a[1].id);
}

#[test]
fn cache_hits_are_byte_identical_and_skip_the_backend() {
    let dir = tempfile::tempdir().unwrap();
    let desc = AutoAnnotatorDescriptor::stub("stub", vec![teh_rule()]);
    let reg = CategoryRegistry::mqm_default();
    let g = Gateway::new(desc.clone(), reg.clone(), Some(dir.path().to_path_buf())).unwrap();
    let first = g.annotate_bytes("s", "teh cat").unwrap();
    let second = g.annotate_bytes("s", "teh cat").unwrap();
    assert_eq!(first, second);
    assert_eq!(g.backend_calls(), 1);
    // a fresh gateway reads the disk cache
    let g2 = Gateway::new(desc, reg, Some(dir.path().to_path_buf())).unwrap();
    assert_eq!(g2.annotate_bytes("s", "teh cat").unwrap(), first);
    assert_eq!(g2.backend_calls(), 0);
}

#[test]
fn concurrent_requests_for_one_input_fetch_once() {
    let (addr, hits) = fake_backend(vec![
        r#"{"errors":[{"side":"target","start":0,"end":3,"category":"Accuracy/Mistranslation","severity":"major"}]}"#.into(),
    ]);
    let g = Arc::new(
        Gateway::new(
            AutoAnnotatorDescriptor::remote("remote", &addr),
            CategoryRegistry::mqm_default(),
            None,
        )
        .unwrap(),
    );
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let g = Arc::clone(&g);
            thread::spawn(move || g.annotate_bytes("src", "abc def").unwrap())
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(results.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    assert_eq!(g.backend_calls(), 1);
}

#[test]
fn remote_spans_are_validated_and_repaired() {
    let (addr, _) = fake_backend(vec![r#"{"errors":[
        {"side":"target","start":4,"end":40,"category":"Fluency/Grammar","severity":"minor"},
        {"side":"target","start":0,"end":2,"category":"Made/Up","severity":"minor"},
        {"side":"source","start":0,"end":3,"category":"Accuracy/Omission","severity":"major"}
    ]}"#
    .replace('\n', "")]);
    let g = Gateway::new(
        AutoAnnotatorDescriptor::remote("remote", &addr),
        CategoryRegistry::mqm_default(),
        None,
    )
    .unwrap();
    let errors = g.annotate("abcdef", "abc def").unwrap();
    assert_eq!(errors.len(), 2);
    assert_eq!((errors[0].start, errors[0].end), (4, 7));
    assert_eq!(errors[1].side, Side::Source);
    let log = g.repair_log();
    assert_eq!(log.len(), 2);
    assert_eq!(log[0].action, RepairAction::Clamped);
    assert_eq!(log[1].action, RepairAction::Dropped);
}

#[test]
fn drop_policy_discards_out_of_range_spans() {
    let (addr, _) = fake_backend(vec![
        r#"{"errors":[{"side":"target","start":4,"end":40,"category":"Fluency/Grammar","severity":"minor"}]}"#.into(),
    ]);
    let mut desc = AutoAnnotatorDescriptor::remote("remote", &addr);
    desc.repair = RepairPolicy::Drop;
    let g = Gateway::new(desc, CategoryRegistry::mqm_default(), None).unwrap();
    assert!(g.annotate("x", "abc def").unwrap().is_empty());
    assert_eq!(g.repair_log()[0].action, RepairAction::Dropped);
}

#[test]
fn failing_backend_leaves_items_pending_after_retries() {
    let (addr, hits) = fake_backend(vec![r#"{"errors":[],"error":"overloaded"}"#.into()]);
    let mut desc = AutoAnnotatorDescriptor::remote("remote", &addr);
    desc.max_retries = 2;
    let g = Gateway::new(desc, CategoryRegistry::mqm_default(), None).unwrap();
    match g.annotate("x", "abc") {
        Err(GatewayError::PendingAuto {
            attempts, last_error, ..
        }) => {
            assert_eq!(attempts, 3);
            assert_eq!(last_error, "overloaded");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_backend_is_pending_and_never_empty() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let mut desc = AutoAnnotatorDescriptor::remote("remote", &addr);
    desc.max_retries = 0;
    desc.timeout_ms = 200;
    let g = Gateway::new(desc, CategoryRegistry::mqm_default(), None).unwrap();
    let sim = simulate(&toy_config(1, 2, 2, 1)).unwrap();
    let (done, pending) = g.annotate_corpus(&sim.corpus, &["sys01".to_string()]);
    assert!(done.is_empty());
    assert_eq!(pending.len(), 2);
    assert!(pending.iter().all(|(_, e)| matches!(e, GatewayError::PendingAuto { .. })));
}

#[test]
fn empty_text_and_bad_descriptor_are_errors() {
    assert_eq!(stub().annotate("", "x").unwrap_err(), GatewayError::EmptyText);
    let mut desc = AutoAnnotatorDescriptor::remote("r", "x");
    desc.endpoint = None;
    assert!(matches!(
        Gateway::new(desc, CategoryRegistry::mqm_default(), None).err().unwrap(),
        GatewayError::Config(_)
    ));
}

#[test]
fn corpus_annotation_is_valid_and_stored_under_the_annotator() {
    let sim = simulate(&toy_config(2, 3, 3, 2)).unwrap();
    let rules = ["the", "a", "of"]
        .iter()
        .map(|t| StubRule {
            token: t.to_string(),
            ..teh_rule()
        })
        .collect();
    let g = Gateway::new(
        AutoAnnotatorDescriptor::stub("auto-x", rules),
        CategoryRegistry::mqm_default(),
        None,
    )
    .unwrap();
    let systems = vec!["sys01".to_string(), "sys02".to_string()];
    let (done, pending) = g.annotate_corpus(&sim.corpus, &systems);
    assert!(pending.is_empty());
    assert_eq!(done.len(), sim.corpus.segments().len() * 2);
    let reg = CategoryRegistry::mqm_default();
    for a in &done {
        assert_eq!(a.rater_id, "auto-x");
        let seg = sim.corpus.segment(&a.doc_id, a.segment_index).unwrap();
        assert!(validate_annotation(a, seg, &reg).is_empty());
    }
}

#[test]
fn descriptor_reads_from_json_with_defaults() {
    let d: AutoAnnotatorDescriptor = serde_json::from_str(
        r#"{"id":"stub","kind":"stub","stub_rules":[{"token":"teh","category":"Fluency/Spelling","severity":"minor"}]}"#,
    )
    .unwrap();
    assert_eq!(d, AutoAnnotatorDescriptor::stub("stub", vec![teh_rule()]));
}
