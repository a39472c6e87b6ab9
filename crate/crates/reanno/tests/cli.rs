mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use mqm_reanno::core::simulate::toy_config;
use mqm_reanno::core::{SegmentAnnotation, Stage};
use mqm_reanno::gateway::{AutoAnnotatorDescriptor, StubRule};
use mqm_reanno::io;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mqm-reanno"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn binary")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut full = args.to_vec();
    full.push("--json");
    serde_json::from_str(&ok(&full)).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Sim {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Sim {
    fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn simulated() -> Sim {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(6, 3, 4, 41);
    cfg.qc_doc = Some("doc000".into());
    let cfg_path = dir.path().join("sim.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let root = dir.path().join("out");
    ok(&["simulate", "--config", p(&cfg_path), "--out-dir", p(&root)]);
    Sim { _dir: dir, root }
}

#[test]
fn simulate_writes_every_artifact() {
    let sim = simulated();
    for f in ["corpus.jsonl", "plan.jsonl", "annotations.jsonl", "events.jsonl", "qc_prior.jsonl", "injection_log.jsonl"] {
        assert!(sim.file(f).exists(), "{f}");
    }
}

#[test]
fn change_rates_table_and_json() {
    let sim = simulated();
    let ann = sim.file("annotations.jsonl");
    let text = ok(&["analyze", "change-rates", "--annotations", p(&ann), "--exclude-doc", "doc000"]);
    for word in ["Deleted", "Changed", "Kept", "Added", "Self", "Other", "Auto"] {
        assert!(text.contains(word), "{text}");
    }
    assert!(!text.contains("doc000"));
    let v = json(&["analyze", "change-rates", "--annotations", p(&ann), "--exclude-doc", "doc000"]);
    assert_eq!(v["command"], "change-rates");
    assert_eq!(v["config"]["match_mode"], "id");
    assert_eq!(v["report"]["excluded_documents"], 1);
    assert!(!v.to_string().contains("doc000"));
    for s in v["report"]["settings"].as_array().unwrap() {
        let m = &s["summary"]["macro"];
        let total = m["deleted"].as_f64().unwrap() + m["changed"].as_f64().unwrap() + m["kept"].as_f64().unwrap();
        assert!((total - 100.0).abs() < 1e-9);
    }
    let overlap = json(&["analyze", "change-rates", "--prior", p(&ann), "--match", "overlap", "--exclude-doc", "doc000"]);
    assert_eq!(overlap["report"]["heuristic"], true);
}

#[test]
fn reports_are_reproducible_byte_for_byte() {
    let sim = simulated();
    let ann = sim.file("annotations.jsonl");
    let corpus = sim.file("corpus.jsonl");
    let args = [
        "analyze", "agreement", "--matrix", "auto", "--annotations", p(&ann), "--corpus", p(&corpus),
        "--exclude-doc", "doc000", "--json",
    ];
    assert_eq!(ok(&args), ok(&args));
}

#[test]
fn agreement_matrix_and_pair() {
    let sim = simulated();
    let ann = sim.file("annotations.jsonl");
    let corpus = sim.file("corpus.jsonl");
    let text = ok(&[
        "analyze", "agreement", "--matrix", "human", "--annotations", p(&ann), "--corpus", p(&corpus),
        "--exclude-doc", "doc000",
    ]);
    assert!(text.contains("Character F1") && text.contains("PRA") && text.contains("h_i|h_i"), "{text}");
    assert!(!text.contains("doc000"));
    let v = json(&[
        "analyze", "agreement", "--matrix", "auto", "--annotations", p(&ann), "--corpus", p(&corpus),
        "--exclude-doc", "doc000", "--sides", "both", "--aggregation", "macro",
    ]);
    assert_eq!(v["report"]["filter"], "self-rater-has-auto");
    assert_eq!(v["config"]["sides"], "both");
    assert_eq!(v["report"]["excluded_documents"], 1);

    // two automatic annotators cover the same items
    let all = io::import_annotations(&ann, Default::default()).unwrap();
    let split = |who: &str| -> PathBuf {
        let v: Vec<SegmentAnnotation> = all
            .iter()
            .filter(|a| a.stage == Stage::Initial && a.rater_id == who)
            .cloned()
            .collect();
        let path = sim.file(&format!("{who}.jsonl"));
        io::save_annotations(&path, &v).unwrap();
        path
    };
    let (a, b) = (split("auto-a"), split("auto-b"));
    let same = json(&["analyze", "agreement", "--left", p(&a), "--right", p(&a), "--corpus", p(&corpus)]);
    assert_eq!(same["report"]["char_f1"], 1.0);
    assert_eq!(same["report"]["pra"], 1.0);
    let cross = json(&["analyze", "agreement", "--left", p(&a), "--right", p(&b), "--corpus", p(&corpus)]);
    let f1 = cross["report"]["char_f1"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&f1));
}

#[test]
fn qc_report_reads_the_injected_prior() {
    let sim = simulated();
    let v = json(&[
        "analyze", "qc", "--annotations", p(&sim.file("annotations.jsonl")), "--qc-prior", p(&sim.file("qc_prior.jsonl")),
    ]);
    assert_eq!(v["command"], "qc");
    let m = &v["report"]["summary"]["macro"];
    assert!(m["deleted"].as_f64().unwrap() > 0.0);
}

#[test]
fn ratio_and_counts() {
    let sim = simulated();
    let v = json(&["analyze", "ratio", "--annotations", p(&sim.file("annotations.jsonl")), "--exclude-doc", "doc000"]);
    assert!(v["report"]["ratio"].as_f64().unwrap() > 1.0);
    let counts = json(&["analyze", "counts", "--plan", p(&sim.file("plan.jsonl"))]);
    // 6 docs × 3 segments × 4 systems
    assert_eq!(counts["report"]["single"], 6 * 3 * 4 * 3);
    assert_eq!(counts["report"]["self"], 6 * 3 * 4);
    assert_eq!(counts["report"]["other"], 2 * 6 * 3 * 4);
    assert_eq!(counts["report"]["auto"], 2 * 6 * 3 * 3);
}

#[test]
fn counts_for_published_shapes() {
    let dir = tempfile::tempdir().unwrap();
    for (name, expected) in [("zh-en", [11856, 3952, 7904, 7410]), ("en-de", [3900, 1300, 2600, 2400])] {
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, serde_json::to_string(&common::shape(name, 3)).unwrap()).unwrap();
        let text = ok(&["analyze", "counts", "--config", p(&path)]);
        let row = text.lines().last().unwrap();
        let nums: Vec<u64> = row.split_whitespace().filter_map(|w| w.parse().ok()).collect();
        assert_eq!(nums, expected, "{text}");
    }
}

#[test]
fn plan_inject_and_auto_annotate() {
    let sim = simulated();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("campaign.json");
    let campaign = toy_config(6, 3, 4, 41).campaign;
    std::fs::write(&cfg, serde_json::to_string(&campaign).unwrap()).unwrap();
    let plan = dir.path().join("plan.jsonl");
    ok(&["plan", "--config", p(&cfg), "--out", p(&plan)]);
    // same seed, same plan as the simulator's
    assert_eq!(std::fs::read(&plan).unwrap(), std::fs::read(sim.file("plan.jsonl")).unwrap());
    let reseeded = dir.path().join("plan2.jsonl");
    ok(&["plan", "--config", p(&cfg), "--out", p(&reseeded), "--seed", "999"]);
    assert_ne!(std::fs::read(&plan).unwrap(), std::fs::read(&reseeded).unwrap());

    let prior = dir.path().join("qc_prior.jsonl");
    let log = dir.path().join("injection.jsonl");
    let text = ok(&[
        "inject", "--plan", p(&plan), "--corpus", p(&sim.file("corpus.jsonl")),
        "--annotations", p(&sim.file("annotations.jsonl")), "--doc", "doc001",
        "--out", p(&prior), "--log", p(&log), "--seed", "5",
    ]);
    assert!(text.contains("injected"), "{text}");
    let injected = io::import_annotations(&prior, Default::default()).unwrap();
    assert!(injected.iter().all(|a| a.doc_id == "doc001"));
    assert!(injected.iter().flat_map(|a| &a.errors).any(|e| e.injected));
    assert_eq!(io::load_jsonl::<Value>(&log).unwrap().len(), 3 * 4);

    let desc = dir.path().join("stub.json");
    let rule = StubRule {
        token: "the".into(),
        side: mqm_reanno::core::Side::Target,
        category: mqm_reanno::core::Category::leaf("Fluency", "Grammar"),
        severity: mqm_reanno::core::Severity::Minor,
    };
    std::fs::write(&desc, serde_json::to_string(&AutoAnnotatorDescriptor::stub("stub-x", vec![rule])).unwrap()).unwrap();
    let out = dir.path().join("auto.jsonl");
    let text = ok(&[
        "auto-annotate", "--corpus", p(&sim.file("corpus.jsonl")), "--annotator", p(&desc),
        "--plan", p(&plan), "--out", p(&out), "--cache-dir", p(&dir.path().join("cache")),
    ]);
    assert!(text.contains("0 pending"), "{text}");
    let auto = io::import_annotations(&out, Default::default()).unwrap();
    assert_eq!(auto.len(), 6 * 3 * 3);
    assert!(auto.iter().all(|a| a.system_id != "refA" && a.rater_id == "stub-x"));
    let again = dir.path().join("auto2.jsonl");
    ok(&[
        "auto-annotate", "--corpus", p(&sim.file("corpus.jsonl")), "--annotator", p(&desc),
        "--plan", p(&plan), "--out", p(&again), "--cache-dir", p(&dir.path().join("cache")),
    ]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn bad_input_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "\n{oops}\n").unwrap();
    let out = run(&["analyze", "change-rates", "--annotations", p(&bad)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl:2:"), "{err}");

    let out = run(&["analyze", "agreement", "--annotations", p(&bad)]);
    assert!(!out.status.success());
    let out = run(&["no-such-command"]);
    assert!(!out.status.success());
}

#[test]
fn missing_prior_is_an_error_not_a_silent_skip() {
    let sim = simulated();
    let all = io::import_annotations(&sim.file("annotations.jsonl"), Default::default()).unwrap();
    let finals: Vec<SegmentAnnotation> = all.into_iter().filter(|a| a.stage == Stage::ReAnnotation).collect();
    let path = sim.file("finals.jsonl");
    io::save_annotations(&path, &finals).unwrap();
    let out = run(&["analyze", "change-rates", "--final", p(&path)]);
    assert!(!out.status.success());
}

#[test]
fn tsv_annotations_feed_the_analyses() {
    let sim = simulated();
    let tsv = sim.file("a.tsv");
    std::fs::write(
        &tsv,
        "doc\tsegment\tsystem\trater\tside\tstart\tend\tcategory\tseverity\n\
         doc001\t0\tsys01\tr1\ttarget\t0\t2\tFluency/Grammar\tminor\n\
         doc001\t1\tsys01\tr1\ttarget\t1\t3\tAccuracy/Mistranslation\tmajor\n\
         doc001\t0\tsys02\tr1\ttarget\t0\t1\tStyle/Awkward\tminor\n\
         doc001\t1\tsys02\tr1\ttarget\t0\t1\tStyle/Awkward\tminor\n",
    )
    .unwrap();
    let v = json(&["analyze", "agreement", "--left", p(&tsv), "--right", p(&tsv), "--corpus", p(&sim.file("corpus.jsonl"))]);
    assert_eq!(v["report"]["char_f1"], 1.0);
}
