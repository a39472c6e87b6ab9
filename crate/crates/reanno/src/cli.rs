use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mqm_reanno_core::agreement::{agreement_report, AgreementOptions};
use mqm_reanno_core::analysis::{
    agreement_matrix, change_rates, count_ratio, qc_analysis, Dataset, MatrixFilter, MatrixSpec,
};
use mqm_reanno_core::planner::{expected_counts, plan_campaign, CampaignConfig, SettingCounts};
use mqm_reanno_core::qc::{inject_document, InjectionConfig, Tokenizer};
use mqm_reanno_core::simulate::{simulate, SimulationConfig};
use mqm_reanno_core::{
    Aggregation, CategoryRegistry, Corpus, MatchMode, SegmentAnnotation, SideSelection, WeightScheme,
};

use crate::gateway::{AutoAnnotatorDescriptor, Gateway};
use crate::io::{self, Checks};
use crate::report::{self, Envelope, ReportConfig};
use crate::service::{CampaignInputs, QcSetup, Service, ServiceConfig};

#[derive(Parser, Debug)]
#[command(name = "mqm-reanno", version, about = "MQM re-annotation campaigns: plan, serve, inject, analyze")]
struct Cli {
    /// Seed for planning, injection and simulation (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Weight scheme JSON file; the default MQM scheme otherwise.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = SidesArg::Target)]
    sides: SidesArg,
    #[arg(long, global = true, value_enum, default_value_t = AggregationArg::Micro)]
    aggregation: AggregationArg,
    /// Category registry JSON file; the default MQM hierarchy otherwise.
    #[arg(long, global = true)]
    categories: Option<PathBuf>,
    /// Emit the JSON report instead of the text table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SidesArg {
    Target,
    Both,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum AggregationArg {
    Micro,
    Macro,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MatchArg {
    Id,
    Overlap,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MatrixArg {
    Human,
    Auto,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FilterArg {
    All,
    SelfRaterHasAuto,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TokenizerArg {
    Whitespace,
    Character,
    Auto,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Plan a campaign from a config file.
    Plan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inject artificial spans into one document and write the control prior.
    Inject {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Initial annotations of the document's human raters.
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        doc: String,
        #[arg(long, value_enum, default_value_t = TokenizerArg::Auto)]
        tokenizer: TokenizerArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Initial annotations from an automatic annotator.
    AutoAnnotate {
        #[arg(long)]
        corpus: PathBuf,
        /// Descriptor JSON file.
        #[arg(long)]
        annotator: PathBuf,
        /// Systems to annotate; all non-reference systems of the plan (or
        /// all corpus systems) otherwise.
        #[arg(long = "system")]
        systems: Vec<String>,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        repair_log: Option<PathBuf>,
    },
    /// Serve tasks over HTTP.
    Serve {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Event log; created if missing, replayed if present.
        #[arg(long)]
        log: PathBuf,
        /// Automatic initial annotations.
        #[arg(long)]
        auto: Vec<PathBuf>,
        #[arg(long)]
        qc_doc: Option<String>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Generate a synthetic campaign.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Reports over annotation files.
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(Args, Debug)]
struct Inputs {
    /// Annotation files (initial and re-annotation); may repeat.
    #[arg(long = "annotations")]
    annotations: Vec<PathBuf>,
    /// Alias for --annotations, for prior annotation files.
    #[arg(long)]
    prior: Vec<PathBuf>,
    /// Alias for --annotations, for final annotation files.
    #[arg(long = "final")]
    final_: Vec<PathBuf>,
    /// Corpus to validate spans against.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Documents left out of the analysis (the control document).
    #[arg(long = "exclude-doc")]
    exclude_docs: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Analyze {
    /// Deleted/Changed/Kept/Added per setting.
    ChangeRates {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long = "match", value_enum, default_value_t = MatchArg::Id)]
        match_mode: MatchArg,
        /// Only `setting` is supported.
        #[arg(long, default_value = "setting")]
        group_by: String,
    },
    /// Character F1 and PRA between two files, or a role matrix.
    Agreement {
        #[arg(long)]
        left: Option<PathBuf>,
        #[arg(long)]
        right: Option<PathBuf>,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum)]
        matrix: Option<MatrixArg>,
        #[arg(long, value_enum)]
        filter: Option<FilterArg>,
    },
    /// Behavior on artificial spans.
    Qc {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        qc_prior: PathBuf,
        #[arg(long = "match", value_enum, default_value_t = MatchArg::Id)]
        match_mode: MatchArg,
    },
    /// Segment-annotation counts per setting.
    Counts {
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Human/automatic initial error-count ratio.
    Ratio {
        #[command(flatten)]
        inputs: Inputs,
        /// Automatic annotator ids, when no Auto re-annotations reveal them.
        #[arg(long = "auto-id")]
        auto_ids: Vec<String>,
    },
}

struct Globals {
    weights: WeightScheme,
    registry: CategoryRegistry,
    sides: SideSelection,
    aggregation: Aggregation,
    seed: Option<u64>,
    json: bool,
}

impl Globals {
    fn config(&self, match_mode: Option<MatchMode>) -> ReportConfig {
        ReportConfig {
            weights: self.weights.clone(),
            sides: self.sides,
            aggregation: self.aggregation,
            match_mode,
            seed: self.seed,
        }
    }

    fn emit<T: Serialize>(&self, command: &str, match_mode: Option<MatchMode>, value: T, text: String) -> String {
        if self.json {
            Envelope {
                command: command.to_string(),
                config: self.config(match_mode),
                report: value,
            }
            .to_json()
        } else {
            text
        }
    }
}

fn match_mode(m: MatchArg) -> MatchMode {
    match m {
        MatchArg::Id => MatchMode::Id,
        MatchArg::Overlap => MatchMode::Overlap,
    }
}

fn tokenizer(t: TokenizerArg) -> Tokenizer {
    match t {
        TokenizerArg::Whitespace => Tokenizer::Whitespace,
        TokenizerArg::Character => Tokenizer::Character,
        TokenizerArg::Auto => Tokenizer::Auto,
    }
}

fn load_annotations(paths: &[&PathBuf], corpus: Option<&Corpus>, registry: &CategoryRegistry) -> anyhow::Result<Vec<SegmentAnnotation>> {
    let mut out = Vec::new();
    for p in paths {
        if p.extension().is_some_and(|e| e == "tsv") {
            out.extend(io::import_tsv(p, registry)?);
            continue;
        }
        out.extend(io::import_annotations(
            p,
            Checks {
                corpus,
                registry: Some(registry),
            },
        )?);
    }
    Ok(out)
}

impl Inputs {
    fn files(&self) -> Vec<&PathBuf> {
        self.annotations.iter().chain(&self.prior).chain(&self.final_).collect()
    }

    fn corpus(&self) -> anyhow::Result<Option<Corpus>> {
        self.corpus.as_deref().map(io::import_corpus).transpose().map_err(Into::into)
    }

    fn dataset(&self, g: &Globals, corpus: Option<&Corpus>) -> anyhow::Result<Dataset> {
        let files = self.files();
        if files.is_empty() {
            bail!("no annotation files given");
        }
        let annotations = load_annotations(&files, corpus, &g.registry)?;
        Ok(Dataset::new(annotations)?.excluding(self.exclude_docs.iter().cloned()))
    }
}

/// Parse `args` (including the program name) and run; returns stdout text.
pub fn run<I, T>(args: I) -> anyhow::Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let g = Globals {
        weights: match &cli.weights {
            Some(p) => io::load_json(p)?,
            None => WeightScheme::mqm_default(),
        },
        registry: match &cli.categories {
            Some(p) => io::load_json(p)?,
            None => CategoryRegistry::mqm_default(),
        },
        sides: match cli.sides {
            SidesArg::Target => SideSelection::Target,
            SidesArg::Both => SideSelection::Both,
        },
        aggregation: match cli.aggregation {
            AggregationArg::Micro => Aggregation::Micro,
            AggregationArg::Macro => Aggregation::Macro,
        },
        seed: cli.seed,
        json: cli.json,
    };
    match cli.command {
        Command::Plan { config, out } => {
            let mut cfg: CampaignConfig = io::load_json(&config)?;
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            let plan = plan_campaign(&cfg)?;
            io::save_plan(&out, &plan)?;
            let counts = expected_counts(&plan);
            Ok(g.emit("plan", None, counts, report::counts_text(&counts)))
        }
        Command::Inject {
            plan,
            corpus,
            annotations,
            doc,
            tokenizer: tok,
            out,
            log,
        } => {
            let plan = io::load_plan(&plan)?;
            let corpus = io::import_corpus(&corpus)?;
            let annotations = load_annotations(&[&annotations], Some(&corpus), &g.registry)?;
            let assignment = plan
                .document(&doc)
                .with_context(|| format!("document `{doc}` is not in the plan"))?;
            let mut cfg = InjectionConfig::new(&doc, g.seed.unwrap_or(plan.seed));
            cfg.tokenizer = tokenizer(tok);
            let systems: Vec<String> = plan.systems.iter().map(|s| s.id.clone()).collect();
            let outcome = inject_document(&corpus, assignment, &systems, &annotations, &cfg, &g.registry)?;
            io::save_annotations(&out, &outcome.prior)?;
            io::save_jsonl(&log, &outcome.log)?;
            Ok(format!(
                "injected {} spans into `{doc}` ({} skipped); densest rater {}\n",
                outcome.injected_ids().len(),
                outcome.log.len() - outcome.injected_ids().len(),
                outcome.densest_rater
            ))
        }
        Command::AutoAnnotate {
            corpus,
            annotator,
            systems,
            plan,
            cache_dir,
            out,
            repair_log,
        } => {
            let corpus = io::import_corpus(&corpus)?;
            let descriptor: AutoAnnotatorDescriptor = io::load_json(&annotator)?;
            let systems = if !systems.is_empty() {
                systems
            } else if let Some(plan) = plan {
                let plan = io::load_plan(&plan)?;
                plan.systems.iter().filter(|s| !s.reference).map(|s| s.id.clone()).collect()
            } else {
                corpus.systems()
            };
            let gateway = Gateway::new(descriptor, g.registry.clone(), cache_dir)?;
            let (done, pending) = gateway.annotate_corpus(&corpus, &systems);
            io::save_annotations(&out, &done)?;
            if let Some(p) = repair_log {
                io::save_jsonl(&p, &gateway.repair_log())?;
            }
            let mut text = format!("{} annotations written, {} pending\n", done.len(), pending.len());
            for (item, e) in &pending {
                text.push_str(&format!("pending {item}: {e}\n"));
            }
            Ok(text)
        }
        Command::Serve {
            plan,
            corpus,
            log,
            auto,
            qc_doc,
            addr,
        } => {
            let plan = io::load_plan(&plan)?;
            let corpus = io::import_corpus(&corpus)?;
            let auto_paths: Vec<&PathBuf> = auto.iter().collect();
            let auto_annotations = load_annotations(&auto_paths, Some(&corpus), &g.registry)?;
            let cfg = ServiceConfig {
                qc: qc_doc.map(|doc_id| QcSetup {
                    doc_id,
                    seed: g.seed.unwrap_or(plan.seed),
                    tokenizer: Tokenizer::Auto,
                }),
                ..ServiceConfig::default()
            };
            let inputs = CampaignInputs {
                plan,
                corpus,
                registry: g.registry.clone(),
                auto_annotations,
            };
            let service = Arc::new(Service::open(&log, inputs, cfg)?);
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("serving on http://{addr}");
            rt.block_on(crate::http::serve(service, &addr))?;
            Ok(String::new())
        }
        Command::Simulate { config, out_dir } => {
            let mut cfg: SimulationConfig = io::load_json(&config)?;
            if let Some(seed) = g.seed {
                cfg.campaign.seed = seed;
            }
            let sim = simulate(&cfg)?;
            std::fs::create_dir_all(&out_dir).with_context(|| out_dir.display().to_string())?;
            io::save_corpus(&out_dir.join("corpus.jsonl"), &sim.corpus)?;
            io::save_plan(&out_dir.join("plan.jsonl"), &sim.plan)?;
            io::save_annotations(&out_dir.join("annotations.jsonl"), &sim.annotations)?;
            io::save_events(&out_dir.join("events.jsonl"), &sim.events)?;
            if let Some(qc) = &sim.qc {
                io::save_annotations(&out_dir.join("qc_prior.jsonl"), &qc.prior)?;
                io::save_jsonl(&out_dir.join("injection_log.jsonl"), &qc.log)?;
            }
            Ok(format!(
                "{} annotations, {} events written to {}\n",
                sim.annotations.len(),
                sim.events.len(),
                out_dir.display()
            ))
        }
        Command::Analyze(a) => analyze(a, &g),
    }
}

fn analyze(a: Analyze, g: &Globals) -> anyhow::Result<String> {
    match a {
        Analyze::ChangeRates {
            inputs,
            match_mode: m,
            group_by,
        } => {
            if group_by != "setting" {
                bail!("--group-by supports only `setting`");
            }
            let corpus = inputs.corpus()?;
            let ds = inputs.dataset(g, corpus.as_ref())?;
            let mode = match_mode(m);
            let r = change_rates(&ds, mode)?;
            let text = report::change_rates_text(&r);
            Ok(g.emit("change-rates", Some(mode), r, text))
        }
        Analyze::Agreement {
            left,
            right,
            inputs,
            matrix,
            filter,
        } => {
            let corpus = inputs
                .corpus()?
                .context("agreement needs --corpus for text lengths")?;
            let options = AgreementOptions {
                corpus: &corpus,
                weights: &g.weights,
                sides: g.sides,
                aggregation: g.aggregation,
            };
            match (left, right, matrix) {
                (Some(l), Some(r), None) => {
                    let left = load_annotations(&[&l], Some(&corpus), &g.registry)?;
                    let right = load_annotations(&[&r], Some(&corpus), &g.registry)?;
                    let keep = |v: Vec<SegmentAnnotation>| -> Vec<SegmentAnnotation> {
                        v.into_iter()
                            .filter(|a| !inputs.exclude_docs.contains(&a.doc_id))
                            .collect()
                    };
                    let rep = agreement_report(
                        &l.display().to_string(),
                        &r.display().to_string(),
                        &keep(left),
                        &keep(right),
                        &options,
                    )?;
                    let text = report::agreement_text(&rep);
                    Ok(g.emit("agreement", None, rep, text))
                }
                (None, None, Some(which)) => {
                    let ds = inputs.dataset(g, Some(&corpus))?;
                    let mut spec = match which {
                        MatrixArg::Human => MatrixSpec::human(),
                        MatrixArg::Auto => MatrixSpec::auto(),
                    };
                    if let Some(f) = filter {
                        spec.filter = match f {
                            FilterArg::All => MatrixFilter::All,
                            FilterArg::SelfRaterHasAuto => MatrixFilter::SelfRaterHasAuto,
                        };
                    }
                    let m = agreement_matrix(&ds, &spec, &options)?;
                    let text = report::matrix_text(&m);
                    Ok(g.emit("agreement-matrix", None, m, text))
                }
                _ => bail!("give either --left and --right, or --matrix with --annotations"),
            }
        }
        Analyze::Qc {
            inputs,
            qc_prior,
            match_mode: m,
        } => {
            let corpus = inputs.corpus()?;
            let files = inputs.files();
            let annotations = load_annotations(&files, corpus.as_ref(), &g.registry)?;
            let prior = load_annotations(&[&qc_prior], corpus.as_ref(), &g.registry)?;
            let mode = match_mode(m);
            let r = qc_analysis(&annotations, &prior, mode)?;
            let text = report::qc_text(&r);
            Ok(g.emit("qc", Some(mode), r, text))
        }
        Analyze::Counts { plan, config } => {
            let counts: SettingCounts = match (plan, config) {
                (Some(p), _) => expected_counts(&io::load_plan(&p)?),
                (None, Some(c)) => {
                    let mut cfg: CampaignConfig = io::load_json(&c)?;
                    if let Some(seed) = g.seed {
                        cfg.seed = seed;
                    }
                    expected_counts(&plan_campaign(&cfg)?)
                }
                (None, None) => bail!("give --plan or --config"),
            };
            Ok(g.emit("counts", None, counts, report::counts_text(&counts)))
        }
        Analyze::Ratio { inputs, auto_ids } => {
            let corpus = inputs.corpus()?;
            let ds = inputs.dataset(g, corpus.as_ref())?.with_auto_ids(auto_ids);
            let r = count_ratio(&ds)?;
            let text = report::ratio_text(&r);
            Ok(g.emit("ratio", None, r, text))
        }
    }
}
